"""Scenario files, Monte-Carlo experiment runners and summary tables.

File format: one ``key = value`` per line, values in TOML syntax, ``#``
comments.  ``pevg = {b = .., s = .., x_ini = ..}`` and ``slot = {capacity
= .., b = [..], s = [..]}`` may repeat; every other key appears at most
once and unknown keys are rejected.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli

from evcharge.baselines import PsoConfig, ed_allocate, pso_allocate
from evcharge.dynamics import SlotState, TransitionConfig, initial_state, state_transition
from evcharge.model import GridParams, PevgParams, Scenario, utilities
from evcharge.stackelberg import ConsistencyError, DegenerateScenario, gse_solve
from evcharge.vi import GeometryError, LineSearchError, NonConvergence, SolverConfig

KINDS = ("solve", "sweep-n", "sweep-capacity", "compare", "dynamic")

SCENARIO_KEYS = {"capacity", "initial_price", "seed", "pevg"}
EXPERIMENT_KEYS = {
    "kind", "runs", "n_values", "capacities", "output_path", "seed", "initial_price",
    "b_range", "s_range", "transition", "slot", "pso_particles", "pso_iterations",
    "redistribute_ed", "tol", "max_iter", "workers",
}
REPEATABLE = {"pevg", "slot"}
PEVG_KEYS = {"b", "s", "x_ini"}
TRANSITION_KEYS = {
    "mode", "mean_capacity", "mean_battery", "range", "slots", "n_pevgs", "battery_bounds",
}
SLOT_KEYS = {"capacity", "b", "s"}

# exit codes
OK, INPUT_ERROR, NONCONVERGENCE, INTERNAL_ERROR = 0, 1, 2, 3


class InputError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    runs: int = 1000
    n_values: tuple[int, ...] = (5, 10, 15, 20, 25)
    capacities: tuple[float, ...] = (99.0,)
    output_path: str = "out"
    seed: int = 0
    initial_price: float = 17.0
    b_range: tuple[float, float] = (35.0, 65.0)
    s_range: tuple[float, float] = (1.0, 2.0)
    transition: TransitionConfig | None = None
    slots: int = 8
    pso: PsoConfig = field(default_factory=PsoConfig)
    redistribute_ed: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if not self.n_values or min(self.n_values) < 1:
            raise ValueError("n_values must be a non-empty list of positive integers")
        if not self.capacities or min(self.capacities) <= 0:
            raise ValueError("capacities must be a non-empty list of positive numbers")
        if self.slots < 1:
            raise ValueError("slots must be >= 1")
        if not self.b_range[0] <= self.b_range[1] or self.b_range[0] <= 0:
            raise ValueError(f"b_range must be an increasing positive pair, got {self.b_range}")
        if not self.s_range[0] <= self.s_range[1] or self.s_range[0] <= 0:
            raise ValueError(f"s_range must be an increasing positive pair, got {self.s_range}")
        if self.transition is not None and self.transition.mode == "schedule":
            if self.slots > len(self.transition.schedule):
                raise ValueError(f"slots={self.slots} exceeds the {len(self.transition.schedule)} scheduled slots")

    @classmethod
    def defaults(cls, kind: str, **overrides) -> "ExperimentSpec":
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
        base = {
            "sweep-n": dict(n_values=(5, 10, 15, 20, 25), capacities=(99.0,)),
            "sweep-capacity": dict(n_values=(10,), capacities=(60.0, 80.0, 90.0)),
            "compare": dict(n_values=(10,), capacities=(99.0,)),
            "dynamic": dict(n_values=(5,), capacities=(66.0,), runs=100),
            "solve": dict(runs=1),
        }[kind]
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind=kind, **base)


# --------------------------------------------------------------------------- files


def _parse_lines(text: str, allowed: set[str], where: str) -> tuple[dict, dict]:
    single: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            item = tomli.loads(line)
        except tomli.TOMLDecodeError as exc:
            raise InputError(f"{where}:{lineno}: cannot parse {line!r} ({exc})") from None
        (key, value), = item.items()
        if key not in allowed:
            raise InputError(f"{where}:{lineno}: unknown key {key!r}")
        if key in REPEATABLE:
            single.setdefault(key, []).append(value)
            lines.setdefault(key, []).append(lineno)
        elif key in single:
            raise InputError(f"{where}:{lineno}: duplicate key {key!r}")
        else:
            single[key] = value
            lines[key] = lineno
    return single, lines


def _check_table(value, keys: set[str], where: str, name: str) -> dict:
    if not isinstance(value, dict):
        raise InputError(f"{where}: {name} must be an inline table {{...}}")
    extra = set(value) - keys
    if extra:
        raise InputError(f"{where}: {name} has unknown key(s) {sorted(extra)}")
    return value


def _pevg(value, where: str) -> PevgParams:
    table = _check_table(value, PEVG_KEYS, where, "pevg")
    for key in ("b", "s"):
        if key not in table:
            raise InputError(f"{where}: pevg is missing {key!r}")
    try:
        return PevgParams(float(table["b"]), float(table["s"]), float(table.get("x_ini", 0.0)))
    except ValueError as exc:
        raise InputError(f"{where}: pevg field {exc}") from None


def parse_scenario(text: str, where: str = "<string>") -> Scenario:
    data, lines = _parse_lines(text, SCENARIO_KEYS, where)
    if "capacity" not in data:
        raise InputError(f"{where}: missing required key 'capacity'")
    if not data.get("pevg"):
        raise InputError(f"{where}: at least one 'pevg = {{b = .., s = ..}}' line is required")
    pevgs = tuple(_pevg(v, f"{where}:{ln}") for v, ln in zip(data["pevg"], lines["pevg"]))
    try:
        grid = GridParams(float(data["capacity"]), float(data.get("initial_price", 0.0)))
        return Scenario(grid, pevgs, int(data.get("seed", 0)))
    except ValueError as exc:
        raise InputError(f"{where}: {exc}") from None


def _transition(value, slots_raw, slot_lines, where, seed) -> tuple[TransitionConfig, int]:
    table = _check_table(value, TRANSITION_KEYS, where, "transition")
    kw = {}
    if "mode" in table:
        kw["mode"] = str(table["mode"])
    for key in ("mean_capacity", "mean_battery"):
        if key in table:
            kw[key] = float(table[key])
    if "range" in table:
        kw["range_factor"] = tuple(float(v) for v in table["range"])
    if "battery_bounds" in table:
        kw["battery_bounds"] = tuple(float(v) for v in table["battery_bounds"])
    if "n_pevgs" in table:
        kw["n_pevgs"] = int(table["n_pevgs"])
    schedule = []
    for t, (raw, ln) in enumerate(zip(slots_raw, slot_lines)):
        slot = _check_table(raw, SLOT_KEYS, f"{where}:{ln}", "slot")
        b, s = list(slot.get("b", [])), list(slot.get("s", []))
        if len(b) != len(s) or not b:
            raise InputError(f"{where}:{ln}: slot needs equal-length non-empty 'b' and 's'")
        try:
            pevgs = tuple(PevgParams(float(bn), float(sn)) for bn, sn in zip(b, s))
            schedule.append(SlotState(t, float(slot["capacity"]), pevgs))
        except (KeyError, ValueError) as exc:
            raise InputError(f"{where}:{ln}: slot {exc}") from None
    if schedule:
        kw["schedule"] = tuple(schedule)
    try:
        cfg = TransitionConfig(seed=seed, **kw)
    except ValueError as exc:
        raise InputError(f"{where}: transition {exc}") from None
    slots = int(table.get("slots", len(schedule) or 8))
    return cfg, slots


def parse_experiment(text: str, where: str = "<string>") -> ExperimentSpec:
    data, lines = _parse_lines(text, EXPERIMENT_KEYS, where)
    if "kind" not in data:
        raise InputError(f"{where}: missing required key 'kind'")
    kw: dict = {}
    seed = int(data.get("seed", 0))
    try:
        for key, conv in (("runs", int), ("output_path", str), ("initial_price", float),
                          ("workers", int), ("redistribute_ed", bool)):
            if key in data:
                kw[key] = conv(data[key])
        if "n_values" in data:
            kw["n_values"] = tuple(int(v) for v in data["n_values"])
        if "capacities" in data:
            kw["capacities"] = tuple(float(v) for v in data["capacities"])
        for key in ("b_range", "s_range"):
            if key in data:
                pair = tuple(float(v) for v in data[key])
                if len(pair) != 2:
                    raise InputError(f"{where}:{lines[key]}: {key} needs two values")
                kw[key] = pair
        pso = {}
        if "pso_particles" in data:
            pso["particles"] = int(data["pso_particles"])
        if "pso_iterations" in data:
            pso["iterations"] = int(data["pso_iterations"])
        kw["pso"] = PsoConfig(**pso)
        solver = {}
        if "tol" in data:
            solver["tol"] = float(data["tol"])
        if "max_iter" in data:
            solver["max_iter"] = int(data["max_iter"])
        kw["solver"] = SolverConfig(**solver)
        if "transition" in data or "slot" in data:
            tcfg, slots = _transition(
                data.get("transition", {}), data.get("slot", []), lines.get("slot", []), where, seed
            )
            kw["transition"] = tcfg
            kw["slots"] = slots
        return ExperimentSpec.defaults(str(data["kind"]), seed=seed, **kw)
    except InputError:
        raise
    except (TypeError, ValueError) as exc:
        raise InputError(f"{where}: {exc}") from None


def load_scenario(path) -> Scenario | ExperimentSpec:
    """Read a scenario file, or an experiment file when it declares ``kind``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    for raw in text.splitlines():
        if raw.strip().startswith("kind"):
            return parse_experiment(text, str(path))
    return parse_scenario(text, str(path))


# --------------------------------------------------------------------------- records


@dataclass
class RunRecord:
    run: int
    n: int
    capacity: float
    p_star: float = math.nan
    lam: float = math.nan  # shared multiplier at the opening price
    iters: int = -1
    sum_x: float = math.nan
    x: np.ndarray | None = None
    u: np.ndarray | None = None
    baselines: dict[str, np.ndarray] | None = None  # name -> per-PEVG utilities
    status: str = "ok"
    slot: int | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def utility(self) -> float:
        return float(np.sum(self.u)) if self.u is not None else math.nan

    def baseline_total(self, name: str) -> float:
        if not self.baselines or self.u is None:
            return math.nan
        return float(np.sum(self.baselines[name]))


BASELINE_NAMES = ("pso", "ed")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def record_header(n: int, with_baselines: bool, with_slot: bool) -> list[str]:
    cols = ["run"] + (["slot"] if with_slot else [])
    cols += ["N", "C", "p_star", "lambda", "iters", "sum_x"]
    cols += [f"x_{i}" for i in range(1, n + 1)] + [f"u_{i}" for i in range(1, n + 1)]
    if with_baselines:
        for name in BASELINE_NAMES:
            cols += [f"u_{name}_total"] + [f"u_{name}_{i}" for i in range(1, n + 1)]
    return cols + ["status"]


def record_row(rec: RunRecord, with_baselines: bool, with_slot: bool) -> list[str]:
    nan = np.full(rec.n, math.nan)
    x = rec.x if rec.x is not None else nan
    u = rec.u if rec.u is not None else nan
    row = [fmt(rec.run)] + ([fmt(rec.slot)] if with_slot else [])
    row += [fmt(rec.n), fmt(rec.capacity), fmt(rec.p_star), fmt(rec.lam), fmt(rec.iters), fmt(rec.sum_x)]
    row += [fmt(v) for v in x] + [fmt(v) for v in u]
    if with_baselines:
        for name in BASELINE_NAMES:
            vals = rec.baselines[name] if rec.baselines else nan
            row += [fmt(np.sum(vals))] + [fmt(v) for v in vals]
    return row + [rec.status]


def read_records(path) -> list[dict]:
    """Parse a record CSV back into dicts of floats (status stays a string)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({k: (v if k == "status" else float(v)) for k, v in row.items()})
    return out


# --------------------------------------------------------------------------- runs


def random_scenario(rng: np.random.Generator, n: int, capacity: float, spec: ExperimentSpec, seed: int = 0):
    b = rng.uniform(*spec.b_range, n)
    s = rng.uniform(*spec.s_range, n)
    return Scenario.from_arrays(b, s, capacity, spec.initial_price, seed=seed)


def _status(exc: Exception) -> str:
    if isinstance(exc, NonConvergence):
        return "nonconvergence"
    if isinstance(exc, (DegenerateScenario, ValueError)) and not isinstance(exc, GeometryError):
        return "input"
    return "internal"


def solve_record(scenario: Scenario, run: int, spec: ExperimentSpec, pso_seed: int | None = None,
                 slot: int | None = None) -> RunRecord:
    rec = RunRecord(run=run, n=scenario.n, capacity=scenario.capacity, slot=slot)
    start = time.perf_counter()
    try:
        out = gse_solve(scenario, spec.solver)
    except (NonConvergence, ConsistencyError, LineSearchError, GeometryError, DegenerateScenario) as exc:
        rec.status = _status(exc)
        rec.seconds = time.perf_counter() - start
        return rec
    rec.p_star, rec.lam, rec.iters = out.p_star, out.initial_lambda, out.iterations_total
    rec.x, rec.u, rec.sum_x = out.x_star, out.utilities, out.total_demand
    if spec.kind in ("compare", "dynamic"):
        p = out.p_star
        pso_cfg = replace(spec.pso, seed=pso_seed if pso_seed is not None else run)
        rec.baselines = {
            "pso": utilities(scenario, pso_allocate(scenario, p, pso_cfg), p),
            "ed": utilities(scenario, ed_allocate(scenario, p, spec.redistribute_ed), p),
        }
    rec.seconds = time.perf_counter() - start
    return rec


def _grid_run(args) -> list[RunRecord]:
    spec, run = args
    out = []
    for n in spec.n_values:
        for cap in spec.capacities:
            # one stream per (seed, run): instances are shared across capacities
            rng = np.random.default_rng([spec.seed, run, n])
            scenario = random_scenario(rng, n, cap, spec, seed=spec.seed)
            pso_seed = int(rng.integers(2**32))
            out.append(solve_record(scenario, run, spec, pso_seed))
    return out


def _dynamic_run(args) -> list[RunRecord]:
    spec, run = args
    base = spec.transition or TransitionConfig(
        mean_capacity=spec.capacities[0], n_pevgs=spec.n_values[0], initial_price=spec.initial_price
    )
    seed = int(np.random.default_rng([spec.seed, run]).integers(2**32))
    cfg = replace(base, seed=seed, initial_price=spec.initial_price)
    rng = np.random.default_rng([spec.seed, run, 1])
    state_rng = np.random.default_rng(cfg.seed)
    state = initial_state(cfg, state_rng)
    recs = []
    for t in range(spec.slots):
        scenario = state.scenario(cfg.initial_price, spec.seed)
        rec = solve_record(scenario, run, spec, int(rng.integers(2**32)), slot=t)
        recs.append(rec)
        if t + 1 < spec.slots:
            state = state_transition(cfg, state, None, state_rng)
    return recs


def execute(spec: ExperimentSpec) -> list[RunRecord]:
    """All records for ``spec``, ordered by run then configuration."""
    fn = _dynamic_run if spec.kind == "dynamic" else _grid_run
    jobs = [(spec, run) for run in range(spec.runs)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(fn, jobs, chunksize=max(1, spec.runs // (4 * spec.workers))))
    else:
        chunks = [fn(job) for job in jobs]
    return [rec for chunk in chunks for rec in chunk]


# --------------------------------------------------------------------------- summaries

STAT_FIELDS = ("p_star", "sum_x", "utility", "iters")


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan}
    return {"mean": float(v.mean()), "std": float(v.std()), "min": float(v.min()), "max": float(v.max())}


def summarize(records: list[RunRecord]) -> list[dict]:
    """Per-configuration mean/std/min/max of price, demand, utility and iterations."""
    if not records:
        raise ValueError("nothing to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        # dynamic slots draw a fresh capacity per run, so they group by slot alone
        key = (rec.n, rec.capacity if rec.slot is None else -1.0, rec.slot)
        groups.setdefault(key, []).append(rec)
    rows = []
    for (n, cap, slot), recs in sorted(groups.items(), key=lambda kv: (kv[0][2] or 0, kv[0][0], kv[0][1])):
        good = [r for r in recs if r.ok]
        row = {"N": n, "C": cap if slot is None else float(np.mean([r.capacity for r in recs]))}
        if slot is not None:
            row["slot"] = slot
        row["runs"] = len(recs)
        row["failures"] = len(recs) - len(good)
        for name in STAT_FIELDS:
            vals = [getattr(r, name) for r in good]
            for stat, value in _stats(vals).items():
                row[f"{name}_{stat}"] = value
        if good and good[0].baselines:
            for name in BASELINE_NAMES:
                vals = [r.baseline_total(name) for r in good]
                for stat, value in _stats(vals).items():
                    row[f"u_{name}_{stat}"] = value
                row[f"ratio_{name}"] = row["utility_mean"] / row[f"u_{name}_mean"]
        rows.append(row)
    return rows


def write_table(path: Path, rows: list[dict]) -> None:
    cols: list[str] = []
    for row in rows:
        cols += [c for c in row if c not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([fmt(row[c]) if c in row else "nan" for c in cols])


def _write_series(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(fmt(v) for v in row) + "\n")


GNUPLOT = {
    "price_vs_n.dat": ("Number of PEVGs", "Average optimal price (USD/MWh)"),
    "iterations_vs_n.dat": ("Number of PEVGs", "Iterations to reach equilibrium"),
    "utility_per_pevg.dat": ("PEVG index", "Average utility"),
    "demand_vs_n.dat": ("Number of PEVGs", "Average demand per PEVG (MWh)"),
    "utility_vs_n.dat": ("Number of PEVGs", "Average utility per PEVG"),
    "demand_per_slot.dat": ("Time slot", "Average demand (MWh)"),
    "utility_per_slot.dat": ("Time slot", "Average utility per PEVG"),
}


def _write_gnuplot(out: Path, series: list[tuple[str, list[str]]]) -> None:
    lines = ["# data-only layout; render with: gnuplot plots.gp", "set terminal pngcairo size 640,480", "set key outside"]
    for name, header in series:
        xl, yl = GNUPLOT[name]
        png = name.replace(".dat", ".png")
        lines += [f'set output "{png}"', f'set xlabel "{xl}"', f'set ylabel "{yl}"']
        plots = [f'"{name}" using 1:{i + 2} with linespoints title "{h}"' for i, h in enumerate(header[1:])]
        lines.append("plot " + ", \\\n     ".join(plots))
    (out / "plots.gp").write_text("\n".join(lines) + "\n")


def _plot_data(spec: ExperimentSpec, records: list[RunRecord], out: Path) -> list[tuple[str, list[str]]]:
    good = [r for r in records if r.ok]
    written = []

    def emit(name, header, rows):
        _write_series(out / name, header, rows)
        written.append((name, header))

    if spec.kind in ("sweep-n", "sweep-capacity"):
        caps = spec.capacities
        header = ["N"] + [f"C={fmt(c)}" for c in caps]
        rows = []
        for n in spec.n_values:
            rows.append([n] + [_stats([r.p_star for r in good if r.n == n and r.capacity == c])["mean"] for c in caps])
        emit("price_vs_n.dat", header, rows)
        header = ["N"]
        for c in caps:
            header += [f"mean_iters_C={fmt(c)}", f"max_iters_C={fmt(c)}"]
        rows = []
        for n in spec.n_values:
            row = [n]
            for c in caps:
                st = _stats([r.iters for r in good if r.n == n and r.capacity == c])
                row += [st["mean"], st["max"]]
            rows.append(row)
        emit("iterations_vs_n.dat", header, rows)
    elif spec.kind == "compare":
        c = spec.capacities[0]
        n0 = spec.n_values[0]
        sel = [r for r in good if r.n == n0 and r.capacity == c]
        rows = []
        for i in range(n0):
            rows.append([i + 1, _stats([r.u[i] for r in sel])["mean"],
                         _stats([r.baselines["pso"][i] for r in sel])["mean"],
                         _stats([r.baselines["ed"][i] for r in sel])["mean"]])
        emit("utility_per_pevg.dat", ["pevg", "proposed", "pso", "ed"], rows)
        rows9, rows10 = [], []
        for n in spec.n_values:
            sel = [r for r in good if r.n == n and r.capacity == c]
            rows9.append([n, _stats([r.sum_x / n for r in sel])["mean"]])
            rows10.append([n] + [_stats([np.mean(v) for v in vals])["mean"] for vals in (
                [r.u for r in sel], [r.baselines["pso"] for r in sel], [r.baselines["ed"] for r in sel])])
        emit("demand_vs_n.dat", ["N", "proposed"], rows9)
        emit("utility_vs_n.dat", ["N", "proposed", "pso", "ed"], rows10)
    elif spec.kind == "dynamic":
        n = good[0].n if good else spec.n_values[0]
        rows11, rows12 = [], []
        for t in range(spec.slots):
            sel = [r for r in good if r.slot == t]
            rows11.append([t + 1] + [_stats([r.x[i] for r in sel])["mean"] for i in range(n)])
            rows12.append([t + 1] + [_stats([np.mean(v) for v in vals])["mean"] for vals in (
                [r.u for r in sel], [r.baselines["pso"] for r in sel], [r.baselines["ed"] for r in sel])])
        emit("demand_per_slot.dat", ["slot"] + [f"pevg_{i + 1}" for i in range(n)], rows11)
        emit("utility_per_slot.dat", ["slot", "proposed", "pso", "ed"], rows12)
    return written


def write_records(spec: ExperimentSpec, records: list[RunRecord], out: Path, timing: bool = False) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    with_b = spec.kind in ("compare", "dynamic")
    with_slot = spec.kind == "dynamic"
    paths = []
    by_cell: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        by_cell.setdefault((rec.n, None if with_slot else rec.capacity), []).append(rec)
    for (n, cap), recs in by_cell.items():
        path = out / (f"records_N{n}.csv" if with_slot else f"records_N{n}_C{fmt(cap)}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(record_header(n, with_b, with_slot))
            for rec in recs:
                w.writerow(record_row(rec, with_b, with_slot))
        paths.append(path)
    write_table(out / "summary.csv", summarize(records))
    paths.append(out / "summary.csv")
    series = _plot_data(spec, records, out)
    if series:
        _write_gnuplot(out, series)
        paths += [out / name for name, _ in series] + [out / "plots.gp"]
    if timing:
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "slot", "N", "C", "seconds"])
            for rec in records:
                w.writerow([rec.run, "" if rec.slot is None else rec.slot, rec.n, fmt(rec.capacity), f"{rec.seconds:.6f}"])
        paths.append(out / "timing.csv")
    return paths


def exit_code(records: list[RunRecord]) -> int:
    statuses = {r.status for r in records}
    if "internal" in statuses:
        return INTERNAL_ERROR
    if "nonconvergence" in statuses:
        return NONCONVERGENCE
    if "input" in statuses:
        return INPUT_ERROR
    return OK


def run_experiment(spec: ExperimentSpec, timing: bool = False) -> tuple[list[Path], list[RunRecord]]:
    """Run every Monte-Carlo cell of ``spec`` and write CSV and plot-data files."""
    records = execute(spec)
    paths = write_records(spec, records, Path(spec.output_path), timing)
    return paths, records
