"""
/game Endpoint
Single-query membership game
"""

import logging
from typing import Union

from fastapi import APIRouter, HTTPException, status

from app.errors import LabError
from app.models.experiment import ExperimentConfig
from app.models.game import DistillationBoundCheck, SqmiEstimate
from app.models.requests import GameRequest
from app.services.experiment import play_game

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Security Game"])


@router.post("/game/run", response_model=Union[DistillationBoundCheck, SqmiEstimate])
def run_game(request: GameRequest):
    """
    Estimate an adversary's success rate against one learner

    Without a config or preset the tiny game configuration is used.
    With `learner: "distilled"` and `alpha` set, the response is the
    stability-bound check.

    **Request Body:**
    ```json
    {
      "learner": "splitai",
      "adversary": "metric",
      "trials": 300,
      "seed": 11
    }
    ```

    **Response:**
    ```json
    {
      "advantage": 0.52,
      "trials": 300,
      "requested_trials": 300,
      "ci_half_width": 0.0565,
      "partial": false
    }
    ```
    """
    try:
        if request.config is None and request.preset is None:
            cfg = ExperimentConfig.game_tiny()
        else:
            cfg = request.resolve()
        return play_game(
            cfg,
            request.learner,
            adversary=request.adversary,
            trials=request.trials,
            n=request.n,
            challenge_index=request.challenge_index,
            alpha=request.alpha,
            seed=request.seed,
        )
    except LabError as exc:
        logger.warning(f"Game rejected: {exc}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=exc.detail)
