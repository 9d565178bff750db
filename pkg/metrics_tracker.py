"""
Metrics Tracker Module
Track and summarize MPI run metrics: wall time, iteration counts, set size
"""
import json
import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

logger = logging.getLogger(__name__)


class MetricsTracker:
    """
    Run log for the CLI sweeps and the service, persisted as JSON
    """

    def __init__(self, metrics_file: Optional[str] = "metrics/run_metrics.json", save_every: int = 10):
        """
        Args:
            metrics_file: JSON file to persist to; None keeps the log in memory
            save_every: Flush to disk after this many new entries
        """
        self.metrics_file = metrics_file
        self.save_every = save_every
        self.runs: List[Dict] = []
        if metrics_file:
            os.makedirs(os.path.dirname(metrics_file) or ".", exist_ok=True)
            self._load_metrics()

    def log_run(
        self,
        label: str,
        branch: str,
        backend: str,
        n: int,
        k_bar: int,
        size: int,
        wall_ms: float,
        reduced_k_bar: Optional[int] = None
    ):
        """
        Log one MPI computation

        Args:
            label: Problem name or sweep instance (e.g. "cse-l=4")
            branch: standard, singular or oracle
            backend: hpoly or czono
            n: State dimension
            k_bar: Reported iteration count
            size: q_bar for half-space sets, n_c for constrained zonotopes
            wall_ms: Wall time in milliseconds
            reduced_k_bar: Iterations of the reduced recurrence, singular branch only
        """
        entry = {
            'timestamp': datetime.now().isoformat(),
            'label': label[:100],
            'branch': branch,
            'backend': backend,
            'n': n,
            'k_bar': k_bar,
            'size': size,
            'wall_ms': round(wall_ms, 3),
            'reduced_k_bar': reduced_k_bar
        }
        self.runs.append(entry)

        if self.metrics_file and len(self.runs) % self.save_every == 0:
            self.save()

    def log_result(self, label: str, result, n: int):
        """Log an MPIResult"""
        self.log_run(
            label, result.branch, result.backend, n, result.k_bar, result.row_count,
            result.wall_time * 1000.0, result.reduced.k_bar if result.reduced is not None else None
        )

    def get_summary(self) -> Dict:
        """
        Aggregate metrics per branch

        Returns:
            Dictionary with run counts, wall-time statistics and iteration averages
        """
        if not self.runs:
            return {
                'total_runs': 0,
                'message': 'No runs logged yet'
            }

        by_branch: Dict[str, Dict] = {}
        for branch in sorted({r['branch'] for r in self.runs}):
            runs = [r for r in self.runs if r['branch'] == branch]
            times = [r['wall_ms'] for r in runs]
            by_branch[branch] = {
                'runs': len(runs),
                'wall_ms': {
                    'avg': round(sum(times) / len(times), 3),
                    'min': round(min(times), 3),
                    'max': round(max(times), 3),
                    'p95': round(self._percentile(times, 95), 3),
                    'p99': round(self._percentile(times, 99), 3)
                },
                'avg_k_bar': round(sum(r['k_bar'] for r in runs) / len(runs), 2),
                'max_size': max(r['size'] for r in runs)
            }

        return {
            'total_runs': len(self.runs),
            'branches': by_branch,
            'slow_runs_over_1s': sum(1 for r in self.runs if r['wall_ms'] > 1000),
            'recent_runs': self.runs[-5:]
        }

    def _percentile(self, data: List[float], percentile: int) -> float:
        """Nearest-rank percentile"""
        if not data:
            return 0.0
        sorted_data = sorted(data)
        index = int(len(sorted_data) * (percentile / 100))
        return sorted_data[min(index, len(sorted_data) - 1)]

    def save(self):
        if not self.metrics_file:
            return
        with open(self.metrics_file, 'w') as f:
            json.dump({
                'runs': self.runs,
                'last_updated': datetime.now().isoformat()
            }, f, indent=2)

    def _load_metrics(self):
        if os.path.exists(self.metrics_file):
            try:
                with open(self.metrics_file, 'r') as f:
                    self.runs = json.load(f).get('runs', [])
                logger.info("loaded %d historical runs", len(self.runs))
            except (OSError, ValueError) as e:
                logger.warning("could not load metrics from %s: %s", self.metrics_file, e)
                self.runs = []
