"""Console entry point.

Kept free of heavy imports so the THREADS environment variable can be
exported to the BLAS/OpenMP pools before numpy is loaded.
"""

import os


def main(argv=None) -> int:
    threads = os.environ.get("THREADS")
    if threads:
        if not threads.isdigit() or int(threads) < 1:
            import sys

            print(f"config error: THREADS={threads!r} is not a positive integer",
                  file=sys.stderr)
            return 2
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    from .cli import main as run

    return run(argv)
