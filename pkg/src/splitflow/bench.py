"""Benchmark harness: Black Scholes and Haversine pipelines, batch sweeps, and
the compute-intensity study.

Each run reports a median wall time over several repetitions and a checksum
of the outputs. Three modes are compared: ``baseline-eager`` calls the
kernels directly over whole arrays, ``sa-nopipe`` splits and parallelizes but
runs each call over every batch before starting the next, and ``sa-pipe``
pushes each batch through the whole stage while it is cache resident.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import statistics
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dataflow import Session
from .demolibs import default_registry
from .executor import DEFAULT_L2_BYTES, ExecConfig

log = logging.getLogger("splitflow.bench")

MODES = ("baseline-eager", "sa-nopipe", "sa-pipe")
CSV_HEADER = ("workload", "mode", "threads", "batch", "wall_ms", "checksum")
INTENSITY_KERNELS = ("add", "mul", "sqrt", "div", "erf", "exp")
CHECKSUM_RTOL = 1e-9

REGISTRY, LIB = default_registry()


# -- hardware ------------------------------------------------------------------


@dataclass(frozen=True)
class CacheInfo:
    l2_bytes: int
    llc_bytes: int


def _parse_size(text: str) -> int:
    text = text.strip().upper()
    scale = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30}.get(text[-1:], 1)
    return int(text.rstrip("KMG")) * scale


def detect_caches(root: str = "/sys/devices/system/cpu/cpu0/cache") -> CacheInfo:
    """Read unified/data cache sizes from sysfs; falls back to 256 KiB L2 and 8 MiB LLC."""
    sizes: dict[int, int] = {}
    try:
        for entry in sorted(Path(root).glob("index*")):
            kind = (entry / "type").read_text().strip()
            if kind == "Instruction":
                continue
            level = int((entry / "level").read_text())
            sizes[level] = max(sizes.get(level, 0), _parse_size((entry / "size").read_text()))
    except (OSError, ValueError):
        sizes = {}
    l2 = sizes.get(2, DEFAULT_L2_BYTES)
    llc = sizes[max(sizes)] if sizes else 8 << 20
    return CacheInfo(l2, llc)


def hardware_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def physical_cores() -> int:
    """Distinct (package, core) pairs visible in sysfs; logical CPUs if unreadable."""
    seen = set()
    for cpu in Path("/sys/devices/system/cpu").glob("cpu[0-9]*"):
        try:
            pkg = (cpu / "topology/physical_package_id").read_text().strip()
            core = (cpu / "topology/core_id").read_text().strip()
        except OSError:
            continue
        seen.add((pkg, core))
    return len(seen) or hardware_threads()


# -- workloads -----------------------------------------------------------------


class Workload:
    """A fixed call sequence over freshly generated inputs."""

    name = ""
    arrays = 0  # arrays touched, inputs and scratch
    inputs = 0  # input arrays, which define the data size

    def setup(self, n: int, seed: int) -> dict:
        raise NotImplementedError

    def capture(self, session: Session, st: dict) -> None:
        raise NotImplementedError

    def outputs(self, st: dict) -> list[np.ndarray]:
        raise NotImplementedError

    def checksum(self, st: dict) -> float:
        return float(sum(np.sum(o, dtype=np.float64) for o in self.outputs(st)))

    def desk_n(self, llc_bytes: int) -> int:
        """Smallest n whose input data is at least four times the last-level cache."""
        return math.ceil(4 * llc_bytes / (8 * self.inputs))


INV_SQRT2 = 1.0 / math.sqrt(2.0)


class BlackScholes(Workload):
    name = "blackscholes"
    arrays = 13
    inputs = 3
    r = 0.05
    sigma = 0.2

    def setup(self, n, seed):
        rng = np.random.default_rng(seed)
        st = {
            "n": n,
            "S": rng.uniform(50.0, 150.0, n),
            "K": rng.uniform(50.0, 150.0, n),
            "T": rng.uniform(0.1, 2.0, n),
        }
        for name in ("a", "b", "d1", "vs", "d2", "nd1", "nd2", "kd", "call", "put"):
            st[name] = np.empty(n)
        return st

    @classmethod
    def capture_arrays(cls, session, n, S, K, T, a, b, d1, vs, d2, nd1, nd2, kd, call, put):
        r, sig = cls.r, cls.sigma
        L = LIB
        reg = session.register
        reg(L.vd_div, n, S, K, d1)
        reg(L.vd_log, n, d1, d1)
        reg(L.vd_mul_scalar, n, T, r, b)
        reg(L.vd_mul_scalar, n, T, 0.5 * sig * sig, a)
        reg(L.vd_add, n, d1, b, d1)
        reg(L.vd_add, n, d1, a, d1)
        reg(L.vd_sqrt, n, T, vs)
        reg(L.vd_mul_scalar, n, vs, sig, vs)
        reg(L.vd_div, n, d1, vs, d1)
        reg(L.vd_sub, n, d1, vs, d2)
        # standard normal cdf: 0.5 * (1 + erf(x / sqrt 2))
        for x, nx in ((d1, nd1), (d2, nd2)):
            reg(L.vd_mul_scalar, n, x, INV_SQRT2, nx)
            reg(L.vd_erf, n, nx, nx)
            reg(L.vd_add_scalar, n, nx, 1.0, nx)
            reg(L.vd_mul_scalar, n, nx, 0.5, nx)
        reg(L.vd_mul_scalar, n, b, -1.0, kd)
        reg(L.vd_exp, n, kd, kd)
        reg(L.vd_mul, n, K, kd, kd)
        reg(L.vd_mul, n, S, nd1, call)
        reg(L.vd_mul, n, kd, nd2, a)
        reg(L.vd_sub, n, call, a, call)
        # N(-x) = 1 - N(x)
        reg(L.vd_mul_scalar, n, nd1, -1.0, d1)
        reg(L.vd_add_scalar, n, d1, 1.0, d1)
        reg(L.vd_mul_scalar, n, nd2, -1.0, d2)
        reg(L.vd_add_scalar, n, d2, 1.0, d2)
        reg(L.vd_mul, n, kd, d2, put)
        reg(L.vd_mul, n, S, d1, b)
        reg(L.vd_sub, n, put, b, put)

    def capture(self, session, st):
        keys = ("S", "K", "T", "a", "b", "d1", "vs", "d2", "nd1", "nd2", "kd", "call", "put")
        self.capture_arrays(session, st["n"], *(st[k] for k in keys))

    def outputs(self, st):
        return [st["call"], st["put"]]


def black_scholes_prices(S, K, T, *, session: Optional[Session] = None):
    """Call and put prices for array inputs, computed through the vector kernels."""
    S, K, T = (np.ascontiguousarray(x, dtype=np.float64) for x in (S, K, T))
    n = len(S)
    scratch = [np.empty(n) for _ in range(10)]
    session = session or Session(REGISTRY, eager=True)
    BlackScholes.capture_arrays(session, n, S, K, T, *scratch)
    session.evaluate()
    return scratch[-2], scratch[-1]


DEG_HALF = math.pi / 360.0
DEG = math.pi / 180.0


class Haversine(Workload):
    name = "haversine"
    arrays = 9
    inputs = 4
    radius = 1.0

    def setup(self, n, seed):
        rng = np.random.default_rng(seed)
        st = {"n": n}
        # bounded spans keep the asin argument well inside [0, 1]
        st["lat1"] = rng.uniform(-60.0, 60.0, n)
        st["lon1"] = rng.uniform(-60.0, 60.0, n)
        st["lat2"] = rng.uniform(-60.0, 60.0, n)
        st["lon2"] = rng.uniform(-60.0, 60.0, n)
        for name in ("dlat", "dlon", "c1", "c2", "out"):
            st[name] = np.empty(n)
        return st

    @classmethod
    def capture_arrays(cls, session, n, lat1, lon1, lat2, lon2, dlat, dlon, c1, c2, out):
        L = LIB
        reg = session.register
        reg(L.vd_sub, n, lat2, lat1, dlat)
        reg(L.vd_mul_scalar, n, dlat, DEG_HALF, dlat)
        reg(L.vd_sin, n, dlat, dlat)
        reg(L.vd_mul, n, dlat, dlat, dlat)
        reg(L.vd_sub, n, lon2, lon1, dlon)
        reg(L.vd_mul_scalar, n, dlon, DEG_HALF, dlon)
        reg(L.vd_sin, n, dlon, dlon)
        reg(L.vd_mul, n, dlon, dlon, dlon)
        reg(L.vd_mul_scalar, n, lat1, DEG, c1)
        reg(L.vd_cos, n, c1, c1)
        reg(L.vd_mul_scalar, n, lat2, DEG, c2)
        reg(L.vd_cos, n, c2, c2)
        reg(L.vd_mul, n, c1, c2, c1)
        reg(L.vd_mul, n, c1, dlon, c1)
        reg(L.vd_add, n, dlat, c1, out)
        reg(L.vd_sqrt, n, out, out)
        reg(L.vd_asin, n, out, out)
        reg(L.vd_mul_scalar, n, out, 2.0 * cls.radius, out)

    def capture(self, session, st):
        keys = ("lat1", "lon1", "lat2", "lon2", "dlat", "dlon", "c1", "c2", "out")
        self.capture_arrays(session, st["n"], *(st[k] for k in keys))

    def outputs(self, st):
        return [st["out"]]


def haversine_distance(lat1, lon1, lat2, lon2, *, session: Optional[Session] = None):
    """Great-circle distances on the unit sphere for coordinates in degrees."""
    args = [np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64) for x in (lat1, lon1, lat2, lon2)]
    n = len(args[0])
    scratch = [np.empty(n) for _ in range(5)]
    session = session or Session(REGISTRY, eager=True)
    Haversine.capture_arrays(session, n, *args, *scratch)
    session.evaluate()
    return scratch[-1]


class Intensity(Workload):
    """One kernel applied ten times to the same input."""

    reps = 10
    arrays = 3
    inputs = 2

    def __init__(self, kernel: str):
        if kernel not in INTENSITY_KERNELS:
            raise ValueError(f"unknown intensity kernel {kernel!r}")
        self.kernel = kernel
        self.name = f"intensity:{kernel}"

    def setup(self, n, seed):
        rng = np.random.default_rng(seed)
        return {
            "n": n,
            "a": rng.uniform(0.5, 1.5, n),
            "b": rng.uniform(0.5, 1.5, n),
            "out": np.empty(n),
        }

    def capture(self, session, st):
        fn = getattr(LIB, f"vd_{self.kernel}")
        binary = self.kernel in ("add", "mul", "div")
        for _ in range(self.reps):
            if binary:
                session.register(fn, st["n"], st["a"], st["b"], st["out"])
            else:
                session.register(fn, st["n"], st["a"], st["out"])

    def outputs(self, st):
        return [st["out"]]


WORKLOADS: dict[str, Callable[[], Workload]] = {
    "blackscholes": BlackScholes,
    "haversine": Haversine,
}


def get_workload(name: str) -> Workload:
    if name.startswith("intensity:"):
        return Intensity(name.split(":", 1)[1])
    try:
        return WORKLOADS[name]()
    except KeyError:
        raise ValueError(f"unknown workload {name!r}") from None


# -- running -------------------------------------------------------------------


@dataclass
class BenchResult:
    workload: str
    mode: str
    threads: int
    batch_elements: int
    wall_ms: float
    checksum: float
    # capture plus planning time of the last run, excluded from CSV
    overhead_ms: float = 0.0
    runs_ms: list[float] = field(default_factory=list)

    def row(self) -> tuple:
        return (
            self.workload,
            self.mode,
            self.threads,
            self.batch_elements,
            f"{self.wall_ms:.3f}",
            repr(self.checksum),
        )


def exec_config(mode: str, threads: int, base: ExecConfig) -> ExecConfig:
    return ExecConfig(
        workers=threads,
        l2_bytes=base.l2_bytes,
        batch_constant_C=base.batch_constant_C,
        batch_override=base.batch_override,
        pedantic=base.pedantic,
        pipelining_enabled=(mode == "sa-pipe"),
    )


def run_workload(
    workload: Workload,
    n: int,
    mode: str,
    threads: int,
    base: ExecConfig,
    *,
    repeats: int = 5,
    seed: int = 0,
    state: Optional[dict] = None,
) -> BenchResult:
    """Time ``repeats`` runs of one workload in one mode and report the median."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    st = state if state is not None else workload.setup(n, seed)
    eager = mode == "baseline-eager"
    cfg = exec_config(mode, 1 if eager else threads, base)
    runs = []
    session = None
    for _ in range(repeats):
        session = Session(REGISTRY, cfg, eager=eager)
        t0 = time.perf_counter_ns()
        workload.capture(session, st)
        session.evaluate()
        runs.append((time.perf_counter_ns() - t0) / 1e6)
    batch = n
    if not eager and session.last_plan is not None and session.last_plan.stages:
        batch = session.last_plan.stages[0].batch_size or n
    overhead = (session.capture_ns + session.plan_ns) / 1e6 if session else 0.0
    result = BenchResult(
        workload.name,
        mode,
        1 if eager else threads,
        batch,
        statistics.median(runs),
        workload.checksum(st),
        overhead,
        runs,
    )
    log.info("%s %s threads=%d batch=%d %.2f ms", result.workload, mode, result.threads, batch, result.wall_ms)
    return result


def run_blackscholes(n: int, cfg: ExecConfig, mode: str = "sa-pipe", **kw) -> BenchResult:
    return run_workload(BlackScholes(), n, mode, cfg.workers, cfg, **kw)


def run_haversine(n: int, cfg: ExecConfig, mode: str = "sa-pipe", **kw) -> BenchResult:
    return run_workload(Haversine(), n, mode, cfg.workers, cfg, **kw)


def checksums_agree(results: Sequence[BenchResult], rtol: float = CHECKSUM_RTOL) -> bool:
    if not results:
        return True
    ref = results[0].checksum
    return all(math.isclose(r.checksum, ref, rel_tol=rtol, abs_tol=0.0) for r in results)


def compare_modes(
    workload: Workload, n: int, threads: Sequence[int], base: ExecConfig, *, repeats=5, seed=0,
    modes: Sequence[str] = MODES,
) -> list[BenchResult]:
    st = workload.setup(n, seed)
    results = []
    for mode in modes:
        for t in ([1] if mode == "baseline-eager" else threads):
            results.append(run_workload(workload, n, mode, t, base, repeats=repeats, seed=seed, state=st))
    return results


def default_batches(n: int) -> list[int]:
    """Powers of two from 2**6 up to 2**22, capped at ``n``."""
    out = [1 << k for k in range(6, 23) if (1 << k) <= n]
    return out or [n]


def sweep_batch(
    workload: Workload,
    batches: Sequence[int],
    n: int,
    threads: int,
    base: ExecConfig,
    *,
    repeats: int = 5,
    seed: int = 0,
) -> list[BenchResult]:
    """One pipelined run per batch size, plus one using the heuristic's choice."""
    st = workload.setup(n, seed)
    results = []
    for b in batches:
        cfg = ExecConfig(
            workers=threads,
            l2_bytes=base.l2_bytes,
            batch_constant_C=base.batch_constant_C,
            batch_override=b,
            pedantic=base.pedantic,
        )
        results.append(run_workload(workload, n, "sa-pipe", threads, cfg, repeats=repeats, state=st))
    auto = ExecConfig(
        workers=threads,
        l2_bytes=base.l2_bytes,
        batch_constant_C=base.batch_constant_C,
        pedantic=base.pedantic,
    )
    r = run_workload(workload, n, "sa-pipe", threads, auto, repeats=repeats, state=st)
    r.workload = f"{workload.name}:auto"
    results.append(r)
    return results


def run_intensity(
    kernels: Sequence[str],
    n: int,
    threads: Sequence[int],
    base: ExecConfig,
    *,
    repeats: int = 5,
    seed: int = 0,
) -> tuple[list[BenchResult], dict[tuple[str, int], float]]:
    """Unpipelined versus pipelined runs of each kernel; speedup = nopipe / pipe."""
    rows: list[BenchResult] = []
    speedups: dict[tuple[str, int], float] = {}
    for k in kernels:
        w = Intensity(k)
        st = w.setup(n, seed)
        for t in threads:
            nopipe = run_workload(w, n, "sa-nopipe", t, base, repeats=repeats, state=st)
            pipe = run_workload(w, n, "sa-pipe", t, base, repeats=repeats, state=st)
            rows += [nopipe, pipe]
            speedups[(k, t)] = nopipe.wall_ms / pipe.wall_ms
    return rows, speedups


# -- explain -------------------------------------------------------------------


def _capture_demo(name: str, session: Session, n: int = 64) -> None:
    rng = np.random.default_rng(0)
    L = LIB
    if name in WORKLOADS or name.startswith("intensity:"):
        w = get_workload(name)
        w.capture(session, w.setup(n, 0))
    elif name == "listing":
        d1, tmp, vol = (rng.random(n) for _ in range(3))
        session.register(L.vd_log1p, n, d1, d1)
        session.register(L.vd_add, n, d1, tmp, d1)
        session.register(L.vd_div, n, d1, vol, d1)
    elif name == "normalize":
        m = rng.random((8, 8))
        session.register(L.normalize_matrix_axis, m, 0)
        session.register(L.normalize_matrix_axis, m, 1)
    elif name == "reduce":
        m = rng.random((8, 8))
        out = np.empty(8)
        v = session.register(L.sum_reduce_to_vector, m, 0)
        session.register(L.vd_mul_scalar, 8, v, 2.0, out)
    elif name == "filter":
        m = rng.random((8, 8))
        f = session.register(L.filter_zeroed_rows, m)
        session.register(L.scale_matrix, f, 2.0)
    else:
        raise ValueError(f"nothing to explain for {name!r}")


EXPLAIN_DEMOS = ("listing", "normalize", "reduce", "filter")


def explain(name: str, n: int = 64) -> str:
    """Plan the workload's captured graph and describe its stages."""
    from . import planner

    session = Session(REGISTRY)
    _capture_demo(name, session, n)
    plan = planner.plan(session.graph, REGISTRY)
    return plan.describe()


# -- CLI -------------------------------------------------------------------------


def write_csv(results: Sequence[BenchResult], path: Optional[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in results:
        w.writerow(r.row())
    text = buf.getvalue()
    if path and path != "-":
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)
    return text


ENV_PREFIX = "SPLITFLOW_BENCH_"


def _env_default(key: str, default=None):
    return os.environ.get(ENV_PREFIX + key, default)


def _thread_list(text: str) -> list[int]:
    out = [int(t) for t in str(text).split(",") if t.strip()]
    if not out or any(t < 1 for t in out):
        raise argparse.ArgumentTypeError("threads must be positive integers")
    return out


def default_threads(limit: Optional[int] = None) -> list[int]:
    """Thread counts 1, 2, 4, 8, 16 capped at the available hardware threads."""
    limit = limit or hardware_threads()
    return [t for t in (1, 2, 4, 8, 16) if t <= limit] or [1]


def build_parser() -> argparse.ArgumentParser:
    caches = detect_caches()
    p = argparse.ArgumentParser(
        prog="bench",
        description="Run split-annotation benchmarks. Flags default to SPLITFLOW_BENCH_<FLAG> "
        "environment variables when set.",
    )
    p.add_argument(
        "workload",
        help="blackscholes, haversine, sweep:<workload>, intensity, or (with --explain) "
        + ", ".join(EXPLAIN_DEMOS),
    )
    env_threads = _env_default("THREADS")
    p.add_argument("--threads", type=_thread_list,
                   default=_thread_list(env_threads) if env_threads else default_threads(),
                   help="worker count or comma-separated list (default: 1,2,4,8,16 up to the hardware threads)")
    p.add_argument("--n", type=int, default=_env_default("N"),
                   help="elements per array (default: input data of 4x the last-level cache)")
    p.add_argument("--batch", type=int, default=_env_default("BATCH"), help="fixed batch size")
    p.add_argument("--l2-bytes", type=int, default=int(_env_default("L2_BYTES", caches.l2_bytes)))
    p.add_argument("--c-constant", type=float, default=float(_env_default("C_CONSTANT", 1.0)))
    p.add_argument("--no-pipeline", action="store_true",
                   default=_env_default("NO_PIPELINE", "0") not in ("0", "", "false"),
                   help="only run the unpipelined split mode")
    p.add_argument("--pedantic", action="store_true",
                   default=_env_default("PEDANTIC", "0") not in ("0", "", "false"))
    p.add_argument("--csv", default=_env_default("CSV"), help="write CSV here instead of stdout")
    p.add_argument("--explain", action="store_true", help="print the stage plan and exit")
    p.add_argument("--seed", type=int, default=int(_env_default("SEED", 0)))
    p.add_argument("--repeats", type=int, default=int(_env_default("REPEATS", 5)))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.explain:
        print(explain(args.workload, int(args.n) if args.n else 64))
        return 0

    base = ExecConfig(
        workers=1,
        l2_bytes=args.l2_bytes,
        batch_constant_C=args.c_constant,
        batch_override=int(args.batch) if args.batch else None,
        pedantic=args.pedantic,
    )
    llc = detect_caches().llc_bytes
    target = args.workload

    if target == "intensity":
        n = int(args.n) if args.n else Intensity("add").desk_n(llc)
        rows, speedups = run_intensity(INTENSITY_KERNELS, n, args.threads, base,
                                       repeats=args.repeats, seed=args.seed)
        write_csv(rows, args.csv)
        for (k, t), s in speedups.items():
            print(f"# speedup {k} threads={t}: {s:.3f}", file=sys.stderr)
        ok = all(checksums_agree([r for r in rows if r.workload == f"intensity:{k}"])
                 for k in INTENSITY_KERNELS)
    elif target.startswith("sweep:"):
        w = get_workload(target.split(":", 1)[1])
        n = int(args.n) if args.n else w.desk_n(llc)
        rows = []
        for t in args.threads:
            rows += sweep_batch(w, default_batches(n), n, t, base, repeats=args.repeats, seed=args.seed)
        write_csv(rows, args.csv)
        ok = checksums_agree(rows)
    else:
        try:
            w = get_workload(target)
        except ValueError as exc:
            print(f"bench: {exc}", file=sys.stderr)
            return 2
        n = int(args.n) if args.n else w.desk_n(llc)
        modes = ("baseline-eager", "sa-nopipe") if args.no_pipeline else MODES
        rows = compare_modes(w, n, args.threads, base, repeats=args.repeats, seed=args.seed, modes=modes)
        write_csv(rows, args.csv)
        ok = checksums_agree(rows)

    if not ok:
        print("bench: checksum mismatch across modes", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
