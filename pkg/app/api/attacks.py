"""
/attacks Endpoints
Attack suites against saved models and single-prediction scores
"""

import logging

import numpy as np
from fastapi import APIRouter, HTTPException, status

from app.errors import LabError
from app.models.experiment import DefenseRow
from app.models.requests import AttackModelRequest, ScoreRequest, ScoreResponse
from app.services.attacks import mia_score
from app.services.experiment import attack_saved_model

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Attacks"])


@router.post("/attacks/run", response_model=DefenseRow)
def run_attacks(request: AttackModelRequest):
    """
    Run the enabled attack suite against a model directory

    The configuration must be the one the model was trained with, so the
    member set and evaluation split line up.

    **Request Body:**
    ```json
    {
      "preset": "desk",
      "seed": 0,
      "model_dir": "models/splitai",
      "all_average": false
    }
    ```
    """
    try:
        return attack_saved_model(request.resolve(), request.model_dir, all_average=request.all_average)
    except LabError as exc:
        logger.warning(f"Attack rejected: {exc}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=exc.detail)


@router.post("/attacks/score", response_model=ScoreResponse)
def score(request: ScoreRequest):
    """
    Membership score of one prediction vector

    **Request Body:**
    ```json
    {
      "kind": "neg_mentr",
      "prediction": [0.7, 0.2, 0.1],
      "label": 0
    }
    ```

    **Response:**
    ```json
    {
      "kind": "neg_mentr",
      "value": -0.1621,
      "direction": "higher_means_member"
    }
    ```
    """
    try:
        reference = None if request.reference is None else np.asarray(request.reference, dtype=np.float64)
        result = mia_score(request.kind, np.asarray(request.prediction, dtype=np.float64), request.label, reference)
        return ScoreResponse(kind=result.kind, value=result.value, direction=result.direction)
    except (LabError, ValueError) as exc:
        detail = exc.detail if isinstance(exc, LabError) else {"error": str(exc)}
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=detail)
