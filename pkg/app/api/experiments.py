"""
/experiments Endpoints
Full runs and stored reports
"""

import logging
from pathlib import Path

from fastapi import APIRouter, HTTPException, Query, status

from app.errors import DataFormatError, LabError
from app.models.experiment import ReportFormat, RunReport
from app.models.requests import RunExperimentRequest
from app.services.experiment import run_experiment
from app.services.report import FILE_NAMES, emit_report, load_report

logger = logging.getLogger(__name__)

router = APIRouter(tags=["Experiments"])


@router.post("/experiments/run", response_model=RunReport)
def run(request: RunExperimentRequest):
    """
    Run the full pipeline and return the report

    The body carries either a complete configuration or a preset name.
    Runs are synchronous; the desk preset takes minutes.

    **Request Body:**
    ```json
    {
      "preset": "game-tiny",
      "seed": 3,
      "emit": true
    }
    ```

    **Response:** the RunReport JSON (rows, sweeps, game, failed_stages).
    A partial report is still returned with status 200; check
    `failed_stages`.
    """
    try:
        cfg = request.resolve()
        report = run_experiment(cfg, emit=False)
        if request.emit:
            emit_report(report, request.formats or cfg.formats, cfg.output_dir)
        if not report.complete:
            logger.warning(f"Partial run '{cfg.name}': {report.failed_stages}")
        return report
    except LabError as exc:
        logger.warning(f"Run rejected: {exc}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=exc.detail)


@router.get("/experiments/report", response_model=RunReport)
def get_report(output_dir: str = Query(..., description="Directory holding report.json")):
    """
    Load a report written by a previous run

    **Example:** `GET /experiments/report?output_dir=runs/desk`
    """
    try:
        return load_report(Path(output_dir) / FILE_NAMES[ReportFormat.JSON])
    except DataFormatError as exc:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=exc.detail)
