"""Timing comparison of the compiled and pure-numpy entropy kernels.

The engine's hot call is batch entropy over one rollout's token
distributions, stored CSR-style (flat probabilities plus row offsets).
That shape is small (tens of rows), so dispatch overhead matters as much
as throughput; a second bulk shape shows the opposite regime. The script
times both shapes under both implementations by re-running itself in a
subprocess with HNDECODE_DISABLE_NUMBA toggled, checks that the outputs
agree to near machine precision, and prints a table.

    python3 benchmarks/bench_entropy.py
    python3 benchmarks/bench_entropy.py --bulk-rows 500000 --repeats 7
"""

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

SHAPES = {
    # name: (rows, max_support, calls timed per repeat)
    "rollout": (64, 20, 2000),
    "bulk": (200_000, 64, 1),
}


def build_workload(rows: int, max_support: int, seed: int):
    """Rows of random support size, normalized, in CSR layout."""
    rng = np.random.default_rng(seed)
    sizes = rng.integers(1, max_support + 1, size=rows)
    offsets = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    flat = rng.random(offsets[-1]) + 1e-12
    sums = np.add.reduceat(flat, offsets[:-1])
    flat /= np.repeat(sums, sizes)
    return flat, offsets


def measure(args, out_dir: Path) -> dict:
    from hndecode import kernels

    report = {"impl": kernels.KERNEL_IMPL, "shapes": {}}
    for name, (rows, max_support, calls) in SHAPES.items():
        if name == "bulk":
            rows = args.bulk_rows
        flat, offsets = build_workload(rows, max_support, seed=7)
        result = kernels.entropy_batch(flat, offsets)  # warmup; compiles under numba
        best = float("inf")
        for _ in range(args.repeats):
            start = time.perf_counter()
            for _ in range(calls):
                result = kernels.entropy_batch(flat, offsets)
            best = min(best, (time.perf_counter() - start) / calls)
        np.save(out_dir / f"{name}.npy", result)
        report["shapes"][name] = {"rows": rows, "per_call_s": best}
    return report


def run_child(disable_numba: bool, args, out_dir: Path) -> dict:
    env = dict(os.environ)
    if disable_numba:
        env["HNDECODE_DISABLE_NUMBA"] = "1"
    else:
        env.pop("HNDECODE_DISABLE_NUMBA", None)
    proc = subprocess.run(
        [
            sys.executable, __file__, "--worker", str(out_dir),
            "--bulk-rows", str(args.bulk_rows),
            "--repeats", str(args.repeats),
        ],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--bulk-rows", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--worker", default=None, help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker is not None:
        print(json.dumps(measure(args, Path(args.worker))))
        return 0

    with tempfile.TemporaryDirectory() as tmp:
        dirs = {"numba": Path(tmp) / "a", "numpy": Path(tmp) / "b"}
        for d in dirs.values():
            d.mkdir()
        fast = run_child(disable_numba=False, args=args, out_dir=dirs["numba"])
        slow = run_child(disable_numba=True, args=args, out_dir=dirs["numpy"])
        for name in SHAPES:
            a = np.load(dirs["numba"] / f"{name}.npy")
            b = np.load(dirs["numpy"] / f"{name}.npy")
            if not np.allclose(a, b, rtol=0.0, atol=1e-12):
                worst = float(np.max(np.abs(a - b)))
                print(
                    f"FAIL: implementations disagree on {name} shape, "
                    f"max abs diff {worst:.3e}",
                    file=sys.stderr,
                )
                return 1

    print(f"repeats={args.repeats} (best per-call time shown)")
    print(f"{'shape':10} {'rows':>8} {fast['impl']:>12} {slow['impl']:>12} {'ratio':>8}")
    for name in SHAPES:
        fa = fast["shapes"][name]
        sl = slow["shapes"][name]
        ratio = sl["per_call_s"] / fa["per_call_s"]
        print(
            f"{name:10} {fa['rows']:>8} {fa['per_call_s'] * 1e6:>10.1f}us "
            f"{sl['per_call_s'] * 1e6:>10.1f}us {ratio:>7.2f}x"
        )
    if fast["impl"] == slow["impl"]:
        print("note: numba unavailable; both runs used the numpy path")
    print("outputs agree within 1e-12")
    return 0


if __name__ == "__main__":
    sys.exit(main())
