"""
/datasets Endpoints
Synthetic dataset generation
"""

import logging

from fastapi import APIRouter, HTTPException, status

from app.errors import LabError
from app.models.requests import GenerateDatasetRequest, GenerateDatasetResponse
from app.services.data import generate_synthetic, save_csv

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Datasets"])


@router.post("/datasets/generate", response_model=GenerateDatasetResponse)
def generate_dataset(request: GenerateDatasetRequest):
    """
    Generate a binary prototype-plus-bitflip dataset

    **Request Body:**
    ```json
    {
      "n_classes": 10,
      "n_features": 100,
      "n_per_class": 400,
      "flip_noise": 0.4,
      "seed": 7,
      "out": "data/desk.csv"
    }
    ```

    **Response:**
    ```json
    {
      "n": 4000,
      "d": 100,
      "k": 10,
      "feature_kind": "binary",
      "seed": 7,
      "fingerprint": "9f2c...",
      "path": "data/desk.csv"
    }
    ```
    """
    try:
        dataset = generate_synthetic(
            request.n_classes, request.n_features, request.n_per_class, request.flip_noise, request.seed
        )
        path = None
        if request.out:
            path = str(save_csv(dataset, request.out))
        return GenerateDatasetResponse(**dataset.manifest(request.seed), path=path)
    except LabError as exc:
        logger.warning(f"Dataset generation rejected: {exc}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=exc.detail)
