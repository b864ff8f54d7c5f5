"""Worker-count control for kernel parallelism."""
import os

ENV_VAR = "NMSPARSE_THREADS"


def max_workers() -> int:
    """Worker cap from the NMSPARSE_THREADS environment variable (default 1)."""
    raw = os.environ.get(ENV_VAR, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
