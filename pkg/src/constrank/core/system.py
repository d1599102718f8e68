"""
System Capabilities Detection
Detects CPU and memory capabilities and derives grid budgets and thread counts for lab runs.
"""

import logging
import os
import platform
import sys
from typing import Any, Dict

import psutil

logger = logging.getLogger(__name__)

# complex128 spectrum plus float64 values per fiber component, with headroom for
# the per-frequency symbol matrices built during projections
BYTES_PER_GRID_POINT = 16 * 9 * 3


def detect_system_capabilities() -> Dict[str, Any]:
    """Detect complete system capabilities"""
    memory = psutil.virtual_memory()
    return {
        'platform': platform.system(),
        'platform_release': platform.release(),
        'architecture': platform.machine(),
        'python_version': sys.version,
        'cpu_cores': psutil.cpu_count(),
        'cpu_cores_physical': psutil.cpu_count(logical=False),
        'total_ram_gb': memory.total // (1024**3),
        'available_ram_gb': memory.available // (1024**3),
        'available_ram_bytes': memory.available,
    }


def recommended_grid_budget(available_bytes: int | None = None) -> int:
    """
    Largest number of grid points a single run should allocate.

    Uses a quarter of the available memory so that batch runs in parallel
    threads stay within RAM.
    """
    if available_bytes is None:
        available_bytes = psutil.virtual_memory().available
    budget = int(available_bytes // 4 // BYTES_PER_GRID_POINT)
    return max(budget, 8**3)


def default_threads() -> int:
    """Thread count used when neither --threads nor CONSTRANK_THREADS is set"""
    env_value = os.environ.get("CONSTRANK_THREADS")
    if env_value:
        try:
            return max(int(env_value), 1)
        except ValueError:
            logger.warning(f"Ignoring non-integer CONSTRANK_THREADS={env_value!r}")
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def determine_run_profile(system_info: Dict[str, Any]) -> Dict[str, Any]:
    """Determine grid budget and concurrency based on system capabilities"""
    budget = recommended_grid_budget(system_info.get('available_ram_bytes'))
    threads = system_info.get('cpu_cores_physical') or system_info.get('cpu_cores') or 1

    profile = {
        'max_grid_points': budget,
        'threads': threads,
        'largest_cube_side': 1 << max(int(budget ** (1.0 / 3.0)).bit_length() - 1, 3),
        'recommendations': [],
    }

    if budget < 128**3:
        profile['recommendations'].append(
            "Limited RAM detected. Keep three-dimensional grids at 64 points per axis."
        )
    if threads < 2:
        profile['recommendations'].append(
            "Single core detected. Run batch manifests sequentially."
        )
    return profile
