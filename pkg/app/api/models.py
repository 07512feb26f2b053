"""
/models Endpoints
Train and save one defense
"""

import logging

from fastapi import APIRouter, HTTPException, status

from app.errors import LabError
from app.models.requests import TrainModelRequest, TrainModelResponse
from app.services.experiment import train_defense

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Models"])


@router.post("/models/train", response_model=TrainModelResponse)
def train_model(request: TrainModelRequest):
    """
    Train a defense on the configured member set and save it

    **Request Body:**
    ```json
    {
      "preset": "desk",
      "seed": 0,
      "defense": "distilled",
      "out": "models/distilled"
    }
    ```

    **Response:**
    ```json
    {
      "defense": "distilled",
      "directory": "models/distilled",
      "train_accuracy": 0.81,
      "test_accuracy": 0.79,
      "gap": 0.02
    }
    ```
    """
    try:
        return TrainModelResponse(**train_defense(request.resolve(), request.defense, request.out))
    except LabError as exc:
        logger.warning(f"Training rejected: {exc}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=exc.detail)
