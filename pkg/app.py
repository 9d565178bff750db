"""
MPI Service
FastAPI application exposing the MPI computation and the ordered Schur split
"""
import logging
import os
import time
from collections import deque
from datetime import datetime
from typing import Any, Deque, Dict, List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

import uvicorn
from fastapi import Body, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from bench_cli import run_problem
from errors import InputValidationError, MPIError, NoZeroEigenvaluesError
from metrics_tracker import MetricsTracker
from mpi import schur_split
from problem_file import parse_problem
from settings import MPIOptions

logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="MPI Set Service",
    description="Maximal positively invariant sets for closed-loop linear systems",
    version="1.0.0"
)

metrics = MetricsTracker(os.getenv("MPI_METRICS_FILE") or None)

RATE_LIMIT_WINDOW = 60.0  # seconds


class SchurRequest(BaseModel):
    matrix: List[List[float]] = Field(..., min_length=1, description="Square closed-loop matrix")
    eps_zero: Optional[float] = Field(None, gt=0, description="Relative zero-eigenvalue threshold")
    tol_nil: Optional[float] = Field(None, gt=0, description="Relative nilpotency tolerance")
    p_offset: Optional[int] = Field(None, ge=0, description="Extra lift steps")


class SchurResponse(BaseModel):
    d1: int
    d2: int
    p: int
    horizon: int
    weyr: List[int]
    jordan_cells: List[List[int]]
    S11: List[List[float]]
    S12: List[List[float]]
    S22: List[List[float]]
    T: List[List[float]]
    U: List[List[float]]


class SlidingWindowLimiter:
    """Per-client request counter over a sliding time window"""

    def __init__(self, limit: int, window: float):
        self.limit = limit
        self.window = window
        self.clients: Dict[str, Deque[float]] = {}

    def allow(self, client: str, now: Optional[float] = None) -> bool:
        now = time.monotonic() if now is None else now
        self._evict(now)
        stamps = self.clients.setdefault(client, deque())
        if len(stamps) >= self.limit:
            return False
        stamps.append(now)
        return True

    def _evict(self, now: float):
        # clients with no request inside the window are dropped entirely
        for client in list(self.clients):
            stamps = self.clients[client]
            while stamps and now - stamps[0] >= self.window:
                stamps.popleft()
            if not stamps:
                del self.clients[client]


limiter = SlidingWindowLimiter(int(os.getenv("MPI_RATE_LIMIT", "30")), RATE_LIMIT_WINDOW)


@app.middleware("http")
async def rate_limit_middleware(request: Request, call_next):
    """Apply rate limiting to all requests"""
    client_ip = request.client.host if request.client else "unknown"

    if not limiter.allow(client_ip):
        return JSONResponse(
            status_code=429,
            content={
                "error": "Rate limit exceeded",
                "message": f"Maximum {limiter.limit} requests per minute"
            }
        )

    return await call_next(request)


def _http_error(e: MPIError) -> HTTPException:
    status = 422 if isinstance(e, (InputValidationError, NoZeroEigenvaluesError)) else 500
    return HTTPException(status_code=status, detail=e.to_dict())


@app.post("/compute")
def compute(problem: Dict[str, Any] = Body(...), include_set: bool = True):
    """
    Compute the MPI set of a problem document (schema 1)
    """
    try:
        parsed = parse_problem(problem)
        _, report = run_problem(parsed, MPIOptions.from_env(), include_set, metrics)
        return report
    except MPIError as e:
        logger.warning("compute failed: %s", e.message)
        raise _http_error(e)


@app.post("/schur", response_model=SchurResponse)
def schur(request: SchurRequest):
    """
    Ordered real Schur split of a closed-loop matrix with zero eigenvalues
    """
    try:
        opts = MPIOptions.from_env().merged(
            eps_zero=request.eps_zero, tol_nil=request.tol_nil, p_offset=request.p_offset
        )
        split = schur_split(request.matrix, opts.eps_zero, opts.tol_nil)
        return SchurResponse(horizon=split.horizon(opts.p_offset), **split.to_dict())
    except MPIError as e:
        raise _http_error(e)


@app.get("/metrics")
async def get_metrics():
    """
    Run metrics of this service instance
    """
    return metrics.get_summary()


@app.get("/health")
async def health_check():
    """
    Health check endpoint
    """
    return {
        "status": "healthy",
        "timestamp": datetime.now().isoformat(),
        "options": MPIOptions.from_env().model_dump()
    }


if __name__ == "__main__":
    logger.info("Access the service at http://localhost:8000")
    uvicorn.run(app, host=os.getenv("MPI_HOST", "0.0.0.0"), port=int(os.getenv("MPI_PORT", "8000")))
