"""Compare the compiled and pure-Python kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--atoms N] [--no-solve]

Kernel rows time each backend on the same inputs.  The solve row runs one
CLI problem end to end in a subprocess, once per backend (``MODEX_PURE=1``
selects the Python kernels at import).
"""
import argparse
import os
import random
import subprocess
import sys
import time
import timeit
from array import array
from pathlib import Path

from modex.kernels import available_backends

ROOT = Path(__file__).resolve().parent.parent


def chain_db(n_atoms):
    """Implication chain x0 -> x1 -> ... plus a few binary side clauses."""
    lits, offsets = array("i"), array("i", [0])
    rng = random.Random(1)
    for a in range(n_atoms - 1):
        lits.extend((2 * a + 1, 2 * (a + 1)))
        offsets.append(len(lits))
    for _ in range(n_atoms):
        a, b = rng.sample(range(n_atoms), 2)
        lits.extend((2 * a + 1, 2 * b + rng.randint(0, 1)))
        offsets.append(len(lits))
    return lits, offsets


def random_3sat(n_atoms, ratio=3.0):
    rng = random.Random(2)
    lits, offsets = array("i"), array("i", [0])
    for _ in range(int(ratio * n_atoms)):
        for a in rng.sample(range(n_atoms), 3):
            lits.append(2 * a + rng.randint(0, 1))
        offsets.append(len(lits))
    return lits, offsets


def workloads(n_atoms):
    rng = random.Random(3)
    a = bytes(rng.choice((0, 1, 2)) for _ in range(n_atoms))
    b = bytes(rng.choice((0, 1, 2)) for _ in range(n_atoms))
    start = bytearray(n_atoms)
    start[0] = 1
    start = bytes(start)
    chain = chain_db(n_atoms)
    sat = random_3sat(n_atoms)
    partial = bytearray(n_atoms)
    for k in rng.sample(range(n_atoms), n_atoms // 3):
        partial[k] = rng.choice((1, 2))
    partial = bytes(partial)
    return [
        ("lub", lambda k: k.lub(a, b)),
        ("leq", lambda k: k.leq(a, b)),
        ("status", lambda k: k.status(a)),
        ("unit_propagate chain", lambda k: k.unit_propagate(start, *chain)),
        ("up_trace chain", lambda k: k.up_trace(start, *chain)),
        ("first_firing 3-sat", lambda k: k.first_firing(partial, *sat)),
        ("unit_propagate 3-sat", lambda k: k.unit_propagate(partial, *sat)),
    ]


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def solve_time(pure: bool) -> float:
    env = dict(os.environ)
    env.pop("MODEX_PURE", None)
    if pure:
        env["MODEX_PURE"] = "1"
    problem = ROOT / "fixtures" / "disconnected2.mx"
    text = problem.read_text().replace("domain a b ;", "domain a b c ;")
    tmp = ROOT / "benchmarks" / ".disconnected3.mx"
    tmp.write_text(text)
    try:
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-m", "modex", "solve", "--problem", str(tmp), "--project-output"],
                       env=env, check=True, stdout=subprocess.DEVNULL)
        return time.perf_counter() - t0
    finally:
        tmp.unlink()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--atoms", type=int, default=2000)
    ap.add_argument("--no-solve", action="store_true", help="skip the end-to-end solve")
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels are not built; only the Python backend is timed")
    names = sorted(backends, key=lambda n: n != "cython")
    print(f"{'kernel':<24}" + "".join(f"{n:>14}" for n in names) + ("      speedup" if len(names) == 2 else ""))
    for label, fn in workloads(args.atoms):
        times = [best_of(lambda k=backends[n]: fn(k), args.repeat) for n in names]
        row = f"{label:<24}" + "".join(f"{t * 1e6:>12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>12.1f}x"
        print(row)
    if not args.no_solve and "cython" in backends:
        fast, slow = solve_time(False), solve_time(True)
        print(f"{'solve disconnected |A|=3':<24}{fast * 1e3:>12.0f}ms{slow * 1e3:>12.0f}ms{slow / fast:>12.1f}x")


if __name__ == "__main__":
    main()
