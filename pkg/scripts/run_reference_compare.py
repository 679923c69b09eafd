"""Generate the reference voxel dataset and compare all three mappings.

Usage:
    python scripts/run_reference_compare.py [workdir]

Writes the dataset to <workdir>/data (skipped if already present), runs the
three-way comparison, and prints the resulting table.  Defaults to
./reference_run.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

from shapelift import pipeline
from shapelift.config import load_experiment, load_manifest

REPO_ROOT = Path(__file__).resolve().parents[1]
REFERENCE_CFG = REPO_ROOT / "configs" / "reference.cfg"


def main() -> int:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("reference_run")
    data_dir = workdir / "data"
    manifest = load_manifest(str(REFERENCE_CFG))
    config = load_experiment(str(REFERENCE_CFG))

    if not (data_dir / "manifest.cfg").exists():
        print(f"generating dataset under {data_dir} ...", file=sys.stderr)
        started = time.perf_counter()
        pipeline.generate_dataset(manifest, data_dir)
        print(f"dataset done in {time.perf_counter() - started:.1f}s",
              file=sys.stderr)

    result = pipeline.compare_methods(config, data_dir)
    pipeline.write_comparison_csv(result, workdir / "compare.csv")
    pipeline.write_comparison_summary(result, workdir / "compare.txt")

    print(f"k_2d={result.k_2d} k_3d={result.k_3d} "
          f"({result.runtime_seconds:.1f}s)")
    print(f"{'method':<8} {'train_rmse':>12} {'test_rmse':>12}")
    for row in result.rows:
        print(f"{row.method:<8} {row.train_rmse:>12.6f} {row.test_rmse:>12.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
