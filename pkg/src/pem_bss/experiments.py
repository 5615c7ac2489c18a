"""Reproducible experiment runner.

An experiment description (YAML) fixes everything: domain, sizes, source
model, mixing distribution, input SNR, algorithm configuration, and seeds.
Running one produces a results CSV (one row per seed), a summary CSV (mean
and 95% confidence half-width), and optionally per-seed diagnostics CSVs.

Recovery is scored on the final learned separator: after the streaming pass,
the frozen state re-infers outputs for every sample and the permutation- and
sign-aligned mean SNR of those outputs is reported.  This keeps the metric a
property of the learned separator rather than of the learning transient.

Determinism contract: (spec, seed) fixes every random draw, and parallel and
serial execution emit identical CSV bodies (the wall_time_s column is the
only exception and is always last).
"""

import concurrent.futures
import dataclasses
import os
import re
import time
from typing import Optional

import yaml

from . import datagen, metrics, pem
from .datagen import MixingDistribution
from .domains import SourceDomain
from .errors import NumericalDivergence, PemError, SpecError

SCHEMA_LINE = "# schema=1"

RESULT_COLUMNS = (
    "name",
    "seed",
    "domain",
    "n",
    "m",
    "T",
    "rho",
    "snr_in_db",
    "variant",
    "msnr_db_mean",
    "per_source_msnr",
    "mean_inner_iters",
    "infeasible_fraction",
    "status",
    "wall_time_s",
)

SUMMARY_COLUMNS = ("name", "num_seeds", "msnr_db_mean", "msnr_db_ci95")

SWEEP_AXES = ("rho", "snr_in_db", "m")

_NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclasses.dataclass(frozen=True)
class SourceModel:
    kind: str = "uniform"
    rho: float = 0.0
    nu: int = 4


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    name: str
    domain: SourceDomain
    n: int
    m: int
    T: int
    source_model: SourceModel
    mixing_dist: MixingDistribution
    snr_in_db: Optional[float]
    pem: pem.PemConfig
    seeds: tuple
    diag_stride: Optional[int]


@dataclasses.dataclass
class ResultRecord:
    name: str
    seed: int
    domain: str
    n: int
    m: int
    T: int
    rho: Optional[float]
    snr_in_db: Optional[float]
    variant: str
    msnr_db_mean: Optional[float]
    per_source_msnr: Optional[list]
    mean_inner_iters: Optional[float]
    infeasible_fraction: Optional[float]
    wall_time_s: float
    status: str = "ok"


# --- spec parsing -----------------------------------------------------------


def _fail(msg, path=None, key=None, text=None):
    where = ""
    if key is not None and text is not None:
        for lineno, line in enumerate(text.splitlines(), 1):
            if re.match(rf"\s*{re.escape(key.split('.')[-1])}\s*:", line):
                where = f" (near line {lineno})"
                break
    prefix = f"{path}: " if path else ""
    raise SpecError(f"{prefix}{msg}{where}")


class _Section:
    """Mapping wrapper with typed access and unknown-key rejection."""

    def __init__(self, data, path, text, prefix=""):
        if not isinstance(data, dict):
            _fail(f"section {prefix or '<top>'} must be a mapping", path)
        self.data = data
        self.path = path
        self.text = text
        self.prefix = prefix
        self.seen = set()

    def _key(self, key):
        return f"{self.prefix}.{key}" if self.prefix else key

    def get(self, key, default=None, required=False):
        self.seen.add(key)
        if key not in self.data:
            if required:
                _fail(f"missing required key {self._key(key)!r}", self.path)
            return default
        return self.data[key]

    def typed(self, key, types, default=None, required=False):
        present = key in self.data
        value = self.get(key, default=default, required=required)
        if present and value is None:
            _fail(f"key {self._key(key)!r} must not be null", self.path)
        if not present:
            return default
        bad_bool = isinstance(value, bool) and bool not in _tuple(types)
        if not isinstance(value, _tuple(types)) or bad_bool:
            _fail(
                f"key {self._key(key)!r} has wrong type {type(value).__name__}",
                self.path,
                key=self._key(key),
                text=self.text,
            )
        return value

    def section(self, key, required=False):
        value = self.get(key, required=required)
        if value is None:
            return None
        return _Section(value, self.path, self.text, prefix=self._key(key))

    def reject_unknown(self):
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            _fail(
                f"unknown key(s) in {self.prefix or '<top>'}: {', '.join(unknown)}",
                self.path,
                key=(self.prefix + "." if self.prefix else "") + unknown[0],
                text=self.text,
            )


def _tuple(types):
    return types if isinstance(types, tuple) else (types,)


def _parse_schedule(sec):
    rule = sec.typed("rule", str, required=True)
    base = float(sec.typed("base", (int, float), required=True))
    divider = float(sec.typed("divider", (int, float), default=1.0))
    floor = float(sec.typed("floor", (int, float), default=0.0))
    sec.reject_unknown()
    return pem.StepSchedule(rule=rule, base=base, divider=divider, floor=floor)


def _parse_init(sec):
    kwargs = {}
    for key, types in (
        ("w_mode", str),
        ("w_scale", (int, float)),
        ("noise_scale", (int, float)),
        ("c0_mode", str),
        ("c0_scale", (int, float)),
        ("mu0", (int, float)),
    ):
        value = sec.get(key)
        if value is not None:
            kwargs[key] = value if isinstance(value, str) else float(value)
    sec.reject_unknown()
    return pem.InitSpec(**kwargs)


_PEM_SCALARS = {
    "lambda": ("lam", float),
    "epsilon": ("epsilon", float),
    "gamma_pred": ("gamma_pred", float),
    "gamma_lateral": ("gamma_lateral", float),
    "eta_lambda": ("eta_lambda", float),
    "tau_max": ("tau_max", int),
    "inner_tol": ("inner_tol", float),
    "variant": ("variant", str),
    "exact_normalization": ("exact_normalization", bool),
    "warm_start_threshold": ("warm_start_threshold", bool),
}


def _parse_pem(node, domain, n, m, path, text):
    if isinstance(node, str):
        try:
            return pem.get_preset(node, n, m)
        except PemError as err:
            _fail(str(err), path)
    sec = _Section(node, path, text, prefix="pem")
    preset = sec.get("preset")
    kwargs = {}
    if preset is not None:
        try:
            base = pem.get_preset(str(preset), n, m)
        except PemError as err:
            _fail(str(err), path)
        if base.domain != SourceDomain(domain):
            _fail(
                f"preset {preset!r} targets domain {base.domain.value!r}, spec says {SourceDomain(domain).value!r}",
                path,
            )
        kwargs = {f.name: getattr(base, f.name) for f in dataclasses.fields(pem.PemConfig)}
    for yaml_key, (attr, typ) in _PEM_SCALARS.items():
        value = sec.get(yaml_key)
        if value is not None:
            if typ in (float, int) and isinstance(value, bool):
                _fail(f"key pem.{yaml_key} has wrong type bool", path)
            kwargs[attr] = typ(value)
    for sched_key in ("w_schedule", "y_schedule"):
        sub = sec.section(sched_key)
        if sub is not None:
            kwargs[sched_key] = _parse_schedule(sub)
    init_sec = sec.section("init")
    if init_sec is not None:
        kwargs["init"] = _parse_init(init_sec)
    sec.reject_unknown()
    kwargs.update(n=n, m=m, domain=SourceDomain(domain))
    missing = [
        k
        for k in ("lam", "epsilon", "gamma_pred", "w_schedule", "y_schedule", "tau_max", "inner_tol")
        if k not in kwargs
    ]
    if missing:
        _fail(f"pem config missing {', '.join(missing)} (set them or use a preset)", path)
    try:
        return pem.PemConfig(**kwargs)
    except PemError as err:
        _fail(f"invalid pem config: {err}", path)


def parse_spec_text(text, path="<spec>"):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise SpecError(f"{path}: YAML parse error: {err}")
    top = _Section(data if data is not None else {}, path, text)
    name = top.typed("name", str, required=True)
    if not _NAME_RE.match(name):
        _fail(f"name {name!r} must match {_NAME_RE.pattern}", path)
    domain = SourceDomain.parse(top.typed("domain", str, required=True))
    n = int(top.typed("n", int, required=True))
    m = int(top.typed("m", int, required=True))
    T = int(top.typed("T", int, required=True))
    if not (m >= n >= 2 and T >= 1):
        _fail(f"need m >= n >= 2 and T >= 1, got n={n} m={m} T={T}", path)
    snr = top.get("snr_in_db")
    if snr is not None and not isinstance(snr, (int, float)):
        _fail("snr_in_db must be a number or null", path, key="snr_in_db", text=text)
    sm_sec = top.section("source_model")
    if sm_sec is None:
        source_model = SourceModel()
    else:
        kind = sm_sec.typed("kind", str, required=True)
        if kind == "uniform":
            sm_sec.reject_unknown()
            source_model = SourceModel(kind="uniform")
        elif kind == "copula_t":
            rho = float(sm_sec.typed("rho", (int, float), default=0.0))
            nu = int(sm_sec.typed("nu", int, default=4))
            sm_sec.reject_unknown()
            if not (0.0 <= rho < 1.0):
                _fail(f"copula rho must lie in [0, 1), got {rho}", path)
            if domain not in (SourceDomain.ANTISPARSE, SourceDomain.NN_ANTISPARSE):
                _fail("copula_t sources require a box domain", path)
            source_model = SourceModel(kind="copula_t", rho=rho, nu=nu)
        else:
            _fail(f"unknown source_model.kind {kind!r}", path)
    mixing = MixingDistribution.parse(top.typed("mixing_dist", str, default="gaussian"))
    seeds = top.typed("seeds", list, required=True)
    if not seeds or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        _fail("seeds must be a nonempty list of unsigned integers", path)
    if len(set(seeds)) != len(seeds):
        _fail("seeds must be distinct", path)
    diag_stride = top.get("diag_stride")
    if diag_stride is not None and (not isinstance(diag_stride, int) or diag_stride < 1):
        _fail("diag_stride must be a positive integer or null", path)
    pem_node = top.get("pem", required=True)
    cfg = _parse_pem(pem_node, domain, n, m, path, text)
    if cfg.domain != domain:
        _fail("pem config domain differs from experiment domain", path)
    top.reject_unknown()
    return ExperimentSpec(
        name=name,
        domain=domain,
        n=n,
        m=m,
        T=T,
        source_model=source_model,
        mixing_dist=mixing,
        snr_in_db=None if snr is None else float(snr),
        pem=cfg,
        seeds=tuple(int(s) for s in seeds),
        diag_stride=diag_stride,
    )


def load_spec(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise SpecError(f"cannot read {path}: {err}")
    return parse_spec_text(text, path=str(path))


# --- single pipeline --------------------------------------------------------

_SENTINEL = object()  # distinguishes "not overridden" from an explicit None


def generate_data(spec, seed, m_task=None, rho=None, snr=_SENTINEL, m_master=None):
    """Sources, mixing matrix, and mixtures for one (spec, seed) task."""
    rho_val = spec.source_model.rho if rho is None else rho
    if spec.source_model.kind == "copula_t":
        batch = datagen.sample_copula_t_source(
            spec.domain, spec.n, spec.T, rho_val, nu=spec.source_model.nu, seed=seed
        )
    else:
        batch = datagen.sample_uniform_source(spec.domain, spec.n, spec.T, seed)
    if m_master is not None:
        A = datagen.gen_mixing(m_master, spec.n, spec.mixing_dist, seed)
        A = datagen.take_first_rows(A, m_task if m_task is not None else spec.m)
    else:
        A = datagen.gen_mixing(m_task if m_task is not None else spec.m, spec.n, spec.mixing_dist, seed)
    snr_val = spec.snr_in_db if snr is _SENTINEL else snr
    X, sigma2 = datagen.mix_with_noise(A, batch, snr_val, seed)
    return batch, A, X, sigma2


def _run_task(spec, seed, axis=None, value=None, m_master=None, diag=False):
    """One full pipeline; returns (ResultRecord, trace_rows or None)."""
    m_task = spec.m
    rho = None
    snr = _SENTINEL
    if axis == "m":
        m_task = int(value)
    elif axis == "rho":
        rho = float(value)
    elif axis == "snr_in_db":
        snr = value
    cfg = spec.pem if m_task == spec.m else dataclasses.replace(spec.pem, m=m_task)
    stride = (spec.diag_stride or 100) if diag else spec.diag_stride
    start = time.perf_counter()
    rho_out = (spec.source_model.rho if rho is None else rho) if spec.source_model.kind == "copula_t" else None
    snr_out = spec.snr_in_db if snr is _SENTINEL else snr
    base = dict(
        name=spec.name,
        seed=seed,
        domain=spec.domain.value,
        n=spec.n,
        m=m_task,
        T=spec.T,
        rho=rho_out,
        snr_in_db=snr_out,
        variant=cfg.variant,
    )
    try:
        batch, A, X, _ = generate_data(spec, seed, m_task=m_task, rho=rho, snr=snr, m_master=m_master)
        result = pem.run_online(X, cfg, seed, diag_stride=stride)
        Y = pem.evaluate_outputs(X, result.state, cfg)
        _, per_source, mean = metrics.aligned_msnr_db(batch.S, Y, spec.domain)
    except NumericalDivergence:
        record = ResultRecord(
            **base,
            msnr_db_mean=None,
            per_source_msnr=None,
            mean_inner_iters=None,
            infeasible_fraction=None,
            wall_time_s=time.perf_counter() - start,
            status="diverged",
        )
        return record, None
    record = ResultRecord(
        **base,
        msnr_db_mean=mean,
        per_source_msnr=[float(v) for v in per_source],
        mean_inner_iters=result.mean_inner_iters,
        infeasible_fraction=result.infeasible_fraction,
        wall_time_s=time.perf_counter() - start,
    )
    return record, result.trace


# --- CSV emission -----------------------------------------------------------


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ";".join(repr(float(v)) for v in value)
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SCHEMA_LINE + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _record_row(record, extra=()):
    return list(extra) + [
        record.name,
        record.seed,
        record.domain,
        record.n,
        record.m,
        record.T,
        record.rho,
        record.snr_in_db,
        record.variant,
        record.msnr_db_mean,
        record.per_source_msnr,
        record.mean_inner_iters,
        record.infeasible_fraction,
        record.status,
        record.wall_time_s,
    ]


def _summary_row(name, records, extra=()):
    values = [r.msnr_db_mean for r in records if r.status == "ok"]
    if len(values) >= 2:
        mean, half = metrics.confidence_interval(values)
    elif values:
        mean, half = values[0], None
    else:
        mean, half = None, None
    return list(extra) + [name, len(values), mean, half]


def _worker_count(num_tasks):
    cap = os.environ.get("PEM_THREADS")
    if cap is not None:
        try:
            cap = int(cap)
        except ValueError:
            raise SpecError(f"PEM_THREADS must be an integer, got {cap!r}")
        if cap < 1:
            raise SpecError("PEM_THREADS must be at least 1")
        return min(cap, num_tasks)
    return 1


def _execute(task_args):
    """Run tasks (list of kwargs dicts) serially or in a process pool."""
    workers = _worker_count(len(task_args))
    if workers <= 1:
        return [_run_task(**kw) for kw in task_args]
    results = [None] * len(task_args)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_run_task_kw, kw): i for i, kw in enumerate(task_args)}
        for fut in concurrent.futures.as_completed(futures):
            results[futures[fut]] = fut.result()
    return results


def _run_task_kw(kw):
    return _run_task(**kw)


def _write_diag(out_dir, spec, seed, trace_rows):
    path = os.path.join(out_dir, f"{spec.name}.seed{seed}.diag.csv")
    rows = []
    for row in trace_rows:
        if not abs(row.r2_spectral) <= row.norm_bound:
            raise PemError(
                f"diagnostics violation at t={row.t}: |R2|={abs(row.r2_spectral)} "
                f"exceeds norm bound {row.norm_bound}"
            )
        rows.append([getattr(row, col) for col in pem.TraceRow.COLUMNS])
    _write_csv(path, pem.TraceRow.COLUMNS, rows)
    return path


def run_experiment(spec, out_dir="."):
    """Execute every seed of a spec; write results and summary CSVs."""
    os.makedirs(out_dir, exist_ok=True)
    outcome = _execute([dict(spec=spec, seed=seed) for seed in spec.seeds])
    records = [rec for rec, _ in outcome]
    results_path = os.path.join(out_dir, f"{spec.name}.results.csv")
    _write_csv(results_path, RESULT_COLUMNS, [_record_row(r) for r in records])
    summary_path = os.path.join(out_dir, f"{spec.name}.summary.csv")
    _write_csv(summary_path, SUMMARY_COLUMNS, [_summary_row(spec.name, records)])
    paths = [results_path, summary_path]
    if spec.diag_stride is not None:
        for (record, trace), seed in zip(outcome, spec.seeds):
            if trace is not None:
                paths.append(_write_diag(out_dir, spec, seed, trace))
    return paths


def run_sweep(spec, axis, values, out_dir="."):
    """Cartesian (values x seeds) runs along one axis, merged CSVs.

    The m axis samples one master mixing matrix per seed at the largest m
    and reuses nested row prefixes, so smaller-m runs see strict subsets of
    the observation channels.
    """
    if axis not in SWEEP_AXES:
        raise SpecError(f"axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise SpecError("sweep needs at least one value")
    m_master = None
    if axis == "rho":
        if spec.source_model.kind != "copula_t":
            raise SpecError("rho sweep requires a copula_t source model")
        values = [float(v) for v in values]
        if not all(0.0 <= v < 1.0 for v in values):
            raise SpecError("rho values must lie in [0, 1)")
    elif axis == "snr_in_db":
        values = [None if v is None else float(v) for v in values]
    else:
        values = [int(v) for v in values]
        if min(values) < spec.n:
            raise SpecError(f"m values must be at least n={spec.n}")
        m_master = max(values)
    os.makedirs(out_dir, exist_ok=True)
    tasks = [
        dict(spec=spec, seed=seed, axis=axis, value=value, m_master=m_master)
        for value in values
        for seed in spec.seeds
    ]
    outcome = _execute(tasks)
    axis_col = f"sweep_{axis}"
    rows = []
    summary_rows = []
    for vi, value in enumerate(values):
        chunk = [outcome[vi * len(spec.seeds) + si][0] for si in range(len(spec.seeds))]
        rows.extend(_record_row(rec, extra=(value,)) for rec in chunk)
        summary_rows.append(_summary_row(spec.name, chunk, extra=(value,)))
    results_path = os.path.join(out_dir, f"{spec.name}.sweep_{axis}.results.csv")
    _write_csv(results_path, (axis_col,) + RESULT_COLUMNS, rows)
    summary_path = os.path.join(out_dir, f"{spec.name}.sweep_{axis}.summary.csv")
    _write_csv(summary_path, (axis_col,) + SUMMARY_COLUMNS, summary_rows)
    return [results_path, summary_path]


def run_diagnose(spec, out_dir="."):
    """Per-seed diagnostics traces of the Taylor-remainder certificates."""
    os.makedirs(out_dir, exist_ok=True)
    outcome = _execute([dict(spec=spec, seed=seed, diag=True) for seed in spec.seeds])
    paths = []
    for (record, trace), seed in zip(outcome, spec.seeds):
        if record.status != "ok":
            raise PemError(f"seed {seed} diverged during diagnose")
        paths.append(_write_diag(out_dir, spec, seed, trace))
    return paths


def dump_data(spec, out_path):
    """Write the generated (S, A, X) of each seed to a PEMB container."""
    paths = []
    for seed in spec.seeds:
        batch, A, X, _ = generate_data(spec, seed)
        if len(spec.seeds) == 1:
            path = out_path
        else:
            root, ext = os.path.splitext(out_path)
            path = f"{root}.seed{seed}{ext or '.pemb'}"
        datagen.write_batch(path, batch, A, X)
        paths.append(path)
    return paths
