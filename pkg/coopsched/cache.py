"""
Cache module for storing run results so that sweeps do not re-simulate cells they already ran.
"""

import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

LOG = logging.getLogger(__name__)

CACHE_DIR_ENV = "COOPSCHED_CACHE_DIR"
DEFAULT_CACHE_DIR = os.path.join(".cache", "runs")


class RunResultCache:
    """Disk cache of run results, one JSON file per (scenario, seed)."""

    def __init__(self, cache_dir: Optional[str] = None):
        if cache_dir is None:
            cache_dir = os.environ.get(CACHE_DIR_ENV, DEFAULT_CACHE_DIR)
        self.cache_dir = cache_dir
        os.makedirs(cache_dir, exist_ok=True)

    def _generate_cache_key(self, config, seed: int) -> str:
        """Generate a unique cache key for scenario + seed. The seed list of the scenario is irrelevant."""
        scenario = config.to_dict()
        scenario.pop("seeds", None)
        hash_data = {"scenario": scenario, "seed": seed}
        json_str = json.dumps(hash_data, sort_keys=True, default=str)
        return hashlib.md5(json_str.encode()).hexdigest()

    def _cache_file(self, config, seed: int) -> str:
        return os.path.join(self.cache_dir, f"{self._generate_cache_key(config, seed)}.json")

    def get(self, config, seed: int) -> Optional[Dict[str, Any]]:
        """Get the cached result fields of a run if they exist."""
        cache_file = self._cache_file(config, seed)
        if not os.path.exists(cache_file):
            return None
        try:
            with open(cache_file, "r") as f:
                cache_data = json.load(f)
            result = cache_data["result"]
        except (json.JSONDecodeError, KeyError):
            LOG.warning(f"ignoring unreadable cache entry {cache_file}")
            return None
        LOG.info(f"cache hit: {config.name} {config.controller} seed {seed}")
        return result

    def set(self, config, seed: int, result: Dict[str, Any]):
        """Cache the result fields of a run."""
        cache_data = {
            "result": result,
            "scenario": config.to_dict(),
            "seed": seed,
        }
        with open(self._cache_file(config, seed), "w") as f:
            json.dump(cache_data, f, indent=2)
        LOG.info(f"cache set: {config.name} {config.controller} seed {seed}")

    def clear(self):
        """Clear all cached results."""
        if os.path.exists(self.cache_dir):
            for file in os.listdir(self.cache_dir):
                if file.endswith(".json"):
                    os.remove(os.path.join(self.cache_dir, file))

    def stats(self) -> Dict[str, Any]:
        """Get cache statistics."""
        if not os.path.exists(self.cache_dir):
            return {"count": 0, "size_mb": 0}
        files = [f for f in os.listdir(self.cache_dir) if f.endswith(".json")]
        total_size = sum(os.path.getsize(os.path.join(self.cache_dir, f)) for f in files)
        return {"count": len(files), "size_mb": round(total_size / (1024 * 1024), 2)}


_run_cache: Optional[RunResultCache] = None


def get_run_cache() -> RunResultCache:
    """Get the global run result cache instance."""
    global _run_cache
    if _run_cache is None:
        _run_cache = RunResultCache()
    return _run_cache


def clear_run_cache():
    """Clear the global run result cache."""
    get_run_cache().clear()
