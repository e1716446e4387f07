"""Config-driven benchmark runs: traces, summaries, rate certificates and plots.

A config is a YAML (or JSON) mapping::

    problem:
      kind: nlls            # nlls | quadratic | autoencoder
      synthetic: {m: 600, n: 500, sparsity: 0.2, row_norm: 3.0, seed: 0}
      init: normal
    optimizers:
      - {name: simba, lr: 0.05, coarse_fraction: 0.05, rank: 20, floor: 1.0e-12}
      - {name: adam, lr: 1.0e-3}
    iters: 3000
    batch_size: 128
    seeds: [0, 1, 2, 3, 4]
    log_every: 50
    out: runs/nlls

Every (optimizer, seed) pair writes one CSV trace under ``<out>/traces``;
``summary.csv`` holds mean and (population) standard deviation of the final
training loss per optimizer.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .baselines import Adam, SGDMomentum
from .libsvm import parse_libsvm
from .problems import (
    MlpSpec,
    autoencoder_problem,
    nlls_problem,
    quadratic_problem,
    synthetic_autoencoder_data,
    synthetic_nlls,
)
from .simba import Simba, SimbaParams
from .verify import iteration_bound, run_theorem_check

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["run_id", "optimizer", "iter", "epoch", "loss", "grad_norm", "step_kind", "seconds"]
OUTPUT_ROOT_ENV = "SIMBA_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_VIOLATION = 4


class ConfigError(ValueError):
    pass


class UnsupportedProblemError(ConfigError):
    pass


# -- config -----------------------------------------------------------------


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg.setdefault("_base_dir", str(path.parent.resolve()))
    return cfg


def apply_overrides(cfg, seed=None, out=None, iters=None):
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seeds"] = [int(seed)]
    if out is not None:
        cfg["out"] = str(out)
    if iters is not None:
        cfg["iters"] = int(iters)
        cfg.setdefault("verify", {})["iters"] = int(iters)
    return cfg


def resolve_out(cfg):
    out = Path(cfg.get("out", "runs/latest"))
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    return out


def _validate_run_config(cfg):
    opts = cfg.get("optimizers")
    if not opts:
        raise ConfigError("config needs at least one optimizer")
    for o in opts:
        if not isinstance(o, dict) or o.get("name") not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer entry {o!r}; known: {sorted(OPTIMIZERS)}")
    if int(cfg.get("iters", 0)) < 1:
        raise ConfigError("iters must be positive")
    if int(cfg.get("batch_size", 128)) < 1:
        raise ConfigError("batch_size must be positive")
    if not cfg.get("seeds"):
        raise ConfigError("need at least one seed")
    labels = [_label(o) for o in opts]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"optimizer labels must be unique, got {labels}")


def _label(opt_cfg):
    return str(opt_cfg.get("label", opt_cfg["name"]))


# -- problems and optimizers -----------------------------------------------


def build_problem(pcfg, seed=None, base_dir="."):
    """Instantiate a problem from its config section.

    A quadratic without an explicit ``seed`` draws its basis and ``x*`` from
    the run seed.
    """
    kind = pcfg.get("kind")
    if kind == "quadratic":
        s = pcfg.get("seed", seed)
        return quadratic_problem(float(pcfg.get("mu", 1.0)), float(pcfg.get("L", 100.0)),
                                 n=int(pcfg.get("n", 200)), seed=s,
                                 basis=pcfg.get("basis", "random"))
    if kind == "nlls":
        if "data" in pcfg:
            path = Path(base_dir) / pcfg["data"]
            data = parse_libsvm(path, n_features=pcfg.get("n_features"))
            if pcfg.get("normalize") == "max_abs":
                scale = np.abs(data.features).max(axis=0)
                scale[scale == 0] = 1.0
                data = type(data)(data.features / scale, data.labels)
        else:
            syn = dict(pcfg.get("synthetic", {}))
            data, _ = synthetic_nlls(int(syn.pop("m", 600)), int(syn.pop("n", 500)), **syn)
        return nlls_problem(data)
    if kind == "autoencoder":
        widths = pcfg.get("widths", [64, 32, 16, 8, 16, 32, 64])
        spec = MlpSpec(widths, pcfg.get("activation", "sigmoid"),
                       float(pcfg.get("init_scale", 1.0)), int(pcfg.get("spec_seed", 0)))
        syn = dict(pcfg.get("synthetic", {}))
        data = synthetic_autoencoder_data(int(syn.get("n_samples", 512)), widths[0],
                                          int(syn.get("latent", 4)), syn.get("seed", 0))
        return autoencoder_problem(spec, data)
    raise ConfigError(f"unknown problem kind {kind!r}")


def _make_simba(o, seed):
    defaults = SimbaParams()
    kw = {}
    for k, v in o.items():
        if k in SimbaParams.__dataclass_fields__ and k != "seed":
            # YAML reads "1e-12" as a string; cast by the field's default type
            kw[k] = type(getattr(defaults, k))(v)
    return Simba(SimbaParams(seed=seed, **kw), name=_label(o))


def _make_adam(o, seed):
    return Adam(lr=float(o.get("lr", 1e-3)), beta1=float(o.get("beta1", 0.9)),
                beta2=float(o.get("beta2", 0.999)), eps=float(o.get("eps", 1e-8)), name=_label(o))


def _make_sgd(o, seed):
    return SGDMomentum(lr=float(o.get("lr", 1e-2)), momentum=float(o.get("momentum", 0.9)),
                       name=_label(o))


OPTIMIZERS = {"simba": _make_simba, "adam": _make_adam, "sgd": _make_sgd}


def make_optimizer(opt_cfg, seed):
    try:
        factory = OPTIMIZERS[opt_cfg["name"]]
    except KeyError:
        raise ConfigError(f"unknown optimizer {opt_cfg.get('name')!r}") from None
    try:
        return factory(opt_cfg, seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyper-parameters for {_label(opt_cfg)}: {exc}") from exc


def learning_rate(base, k, total, schedule=None):
    """Constant or cosine-annealed step size at iteration ``k`` (0-based)."""
    if not schedule or schedule.get("kind", "constant") == "constant":
        return base
    if schedule["kind"] == "cosine":
        lo = base * float(schedule.get("min_factor", 0.0))
        return lo + 0.5 * (base - lo) * (1 + math.cos(math.pi * k / max(total, 1)))
    raise ConfigError(f"unknown schedule {schedule['kind']!r}")


# -- single run --------------------------------------------------------------


@dataclass
class TraceRow:
    run_id: str
    optimizer: str
    iter: int
    epoch: int
    loss: float
    grad_norm: float
    step_kind: str
    seconds: float

    def as_list(self):
        return [self.run_id, self.optimizer, str(self.iter), str(self.epoch), repr(self.loss),
                repr(self.grad_norm), self.step_kind, f"{self.seconds:.6f}"]


class BatchStream:
    """Reshuffle every epoch and hand out consecutive batches (last one may be short)."""

    def __init__(self, n, batch_size, rng):
        self.n, self.bs, self.rng = n, batch_size, rng
        self.epoch = 0
        self._perm = rng.permutation(n)
        self._pos = 0

    def next(self):
        if self._pos >= self.n:
            self.epoch += 1
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        idx = self._perm[self._pos:self._pos + self.bs]
        self._pos += self.bs
        return idx


def _kind(reports):
    kinds = {r.kind for r in reports}
    if not kinds:
        return "none"
    return kinds.pop() if len(kinds) == 1 else "mixed"


def run_single(problem, opt_cfg, seed, iters, batch_size=128, init="default", log_every=10,
               schedule=None):
    """Train one optimizer from one seed; returns the list of :class:`TraceRow`."""
    init_ss, batch_ss = np.random.SeedSequence(seed).spawn(2)
    params = problem.init_params(np.random.default_rng(init_ss), init)
    opt = make_optimizer(opt_cfg, seed)
    base_lr = float(opt_cfg.get("lr", opt.hp.lr if isinstance(opt, Simba) else opt.lr))
    label = _label(opt_cfg)
    run_id = f"{label}-s{seed}"
    full_batch = problem.n_samples <= 1
    stream = None if full_batch else BatchStream(problem.n_samples, batch_size,
                                                 np.random.default_rng(batch_ss))

    def row(k, kind, elapsed):
        epoch = k if full_batch else stream.epoch
        return TraceRow(run_id, label, k, epoch, problem.loss(params),
                        problem.grad_norm(params), kind, elapsed)

    rows = [row(0, "init", 0.0)]
    elapsed = 0.0
    for k in range(1, iters + 1):
        t0 = time.perf_counter()
        idx = None if full_batch else stream.next()
        grads = problem.grad(params, idx)
        lr = learning_rate(base_lr, k - 1, iters, schedule)
        params, reports = opt.step(params, grads, lr=lr)
        elapsed += time.perf_counter() - t0
        if k % log_every == 0 or k == iters:
            rows.append(row(k, _kind(reports), elapsed))
    return rows


def write_trace(rows, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow(r.as_list())


def read_trace(path):
    with open(path, newline="") as fh:
        rdr = csv.DictReader(fh)
        if rdr.fieldnames != TRACE_COLUMNS:
            raise ConfigError(f"{path}: unexpected trace header {rdr.fieldnames}")
        return [TraceRow(r["run_id"], r["optimizer"], int(r["iter"]), int(r["epoch"]),
                         float(r["loss"]), float(r["grad_norm"]), r["step_kind"],
                         float(r["seconds"])) for r in rdr]


# -- commands ----------------------------------------------------------------


def _echo_config(cfg, out):
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    (out / "config.yaml").write_text(yaml.safe_dump(clean, sort_keys=False))


def summarize(final_losses, order):
    rows = []
    for label in order:
        v = np.array(final_losses[label])
        rows.append({"optimizer": label, "runs": v.size, "mean_final_loss": float(v.mean()),
                     "std_final_loss": float(v.std())})
    return rows


def write_summary(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["optimizer", "runs", "mean_final_loss", "std_final_loss"])
        for r in rows:
            w.writerow([r["optimizer"], r["runs"], repr(r["mean_final_loss"]),
                        repr(r["std_final_loss"])])


def run(cfg):
    """Execute every (optimizer, seed) pair; returns ``(out_dir, summary_rows, final_losses)``."""
    _validate_run_config(cfg)
    out = resolve_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)
    pcfg = cfg.get("problem", {})
    base_dir = cfg.get("_base_dir", ".")
    iters = int(cfg["iters"])
    order = [_label(o) for o in cfg["optimizers"]]
    finals = {label: [] for label in order}
    problems = {}
    for seed in cfg["seeds"]:
        seed = int(seed)
        key = seed if (pcfg.get("kind") == "quadratic" and "seed" not in pcfg) else None
        if key not in problems:
            problems[key] = build_problem(pcfg, seed, base_dir)
        problem = problems[key]
        for o in cfg["optimizers"]:
            rows = run_single(problem, o, seed, iters, int(cfg.get("batch_size", 128)),
                              pcfg.get("init", "default"), int(cfg.get("log_every", 10)),
                              cfg.get("schedule"))
            write_trace(rows, out / "traces" / f"{_label(o)}_seed{seed}.csv")
            finals[_label(o)].append(rows[-1].loss)
            logger.info("%s seed %d: final loss %.6g", _label(o), seed, rows[-1].loss)
    summary = summarize(finals, order)
    write_summary(summary, out / "summary.csv")
    return out, summary, finals


def verify(cfg, factor=None):
    """Theorem check on a problem with known ``mu``, ``L``, ``f*``.

    Returns ``(out_dir, report, exit_code)``.
    """
    pcfg = cfg.get("problem", {})
    if pcfg.get("kind") != "quadratic":
        raise UnsupportedProblemError(
            f"verify needs a problem with known (mu, L, f*); {pcfg.get('kind')!r} has none")
    vcfg = dict(cfg.get("verify", {}))
    if factor is None:
        factor = vcfg.get("factor")
    iters = int(vcfg.get("iters", cfg.get("iters", 300)))
    seeds = [int(s) for s in cfg.get("seeds", [0])]
    eps_sweep = [float(e) for e in vcfg.get("eps_sweep", [])]
    out = resolve_out(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, out)

    per_seed, total_viol = [], 0
    for seed in seeds:
        problem = build_problem(pcfg, seed, cfg.get("_base_dir", "."))
        res = run_theorem_check(
            problem, iters=iters, m=float(vcfg.get("floor", 1.0)), xi=float(vcfg.get("xi", 0.5)),
            e=float(vcfg.get("e", 1e-12)), coarse_fraction=float(vcfg.get("coarse_fraction", 0.5)),
            rank=int(vcfg.get("rank", 20)), seed=seed, eps_rel=float(vcfg.get("eps_rel", 1e-6)),
            factor=None if factor is None else float(factor),
        )
        rows = [TraceRow(f"simba-theory-s{seed}", "simba-theory", k, k, float(fk),
                         float("nan"), "init" if k == 0 else res.kinds[k - 1], 0.0)
                for k, fk in enumerate(res.f)]
        write_trace(rows, out / "traces" / f"simba-theory_seed{seed}.csv")
        cert = res.certificate
        ok = (res.n_violations == 0 and res.bound_holds and res.lambda_bound_ok
              and res.direction_bound_ok)
        total_viol += res.n_violations + (not res.bound_holds) + (not res.lambda_bound_ok) \
            + (not res.direction_bound_ok)
        gap0 = res.f[0] - problem.f_star
        per_seed.append({
            "seed": seed,
            "certificate": {k: getattr(cert, k) for k in
                            ("mu", "L", "m", "M", "xi", "omega", "c_hat", "c", "K_hat", "K")},
            "coarse_steps": res.n_coarse,
            "fine_steps": res.n_fine,
            "coarse_violations": res.coarse_report.n_violations,
            "fine_violations": res.fine_report.n_violations,
            "stepwise_violations": res.stepwise_report.n_violations,
            "worst_ratio": res.stepwise_report.worst_ratio,
            "final_gap_ratio": float((res.f[-1] - problem.f_star) / gap0),
            "first_hit": res.first_hit,
            "iteration_bound_holds": res.bound_holds,
            "lambda_bound_ok": res.lambda_bound_ok,
            "direction_bound_ok": res.direction_bound_ok,
            "K_hat_sweep": [[e, iteration_bound(cert.c_hat, gap0, e * gap0)] for e in eps_sweep],
            "ok": bool(ok),
        })
    report = {"seeds": per_seed, "violations": int(total_viol), "factor_override": factor}
    (out / "certificate.json").write_text(json.dumps(report, indent=2, default=_json_default))
    return out, report, EXIT_VIOLATION if total_viol else EXIT_OK


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


def plot(trace_dir):
    """Write loss-vs-iteration and loss-vs-seconds SVG charts; returns their paths."""
    figs = build_figures(trace_dir)
    paths = []
    for name, fig in figs.items():
        p = Path(trace_dir) / f"{name}.svg"
        fig.savefig(p, format="svg")
        paths.append(p)
    import matplotlib.pyplot as plt

    for fig in figs.values():
        plt.close(fig)
    return paths


def _series(trace_dir):
    trace_dir = Path(trace_dir)
    files = sorted((trace_dir / "traces").glob("*.csv")) or sorted(trace_dir.glob("*.csv"))
    files = [f for f in files if f.name != "summary.csv"]
    if not files:
        raise FileNotFoundError(f"no traces under {trace_dir}")
    runs = {}
    for f in files:
        rows = read_trace(f)
        if rows:
            runs.setdefault(rows[0].optimizer, []).append(rows)
    order = list(runs)
    cfg_path = trace_dir / "config.yaml"
    if cfg_path.exists():
        cfg = yaml.safe_load(cfg_path.read_text()) or {}
        cfg_order = [_label(o) for o in cfg.get("optimizers", []) if isinstance(o, dict)]
        order = [o for o in cfg_order if o in runs] + [o for o in order if o not in cfg_order]
    series = {}
    for label in order:
        n = min(len(r) for r in runs[label])
        it = np.array([row.iter for row in runs[label][0][:n]])
        loss = np.mean([[row.loss for row in r[:n]] for r in runs[label]], axis=0)
        sec = np.mean([[row.seconds for row in r[:n]] for r in runs[label]], axis=0)
        series[label] = (it, sec, loss)
    return series


def build_figures(trace_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = _series(trace_dir)
    positive = all(np.all(s[2] > 0) for s in series.values())
    figs = {}
    for name, col, xlabel in (("loss_vs_iter", 0, "iteration"), ("loss_vs_time", 1, "seconds")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, s in series.items():
            ax.plot(s[col], s[2], label=label)
        if positive:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("training loss")
        ax.legend()
        fig.tight_layout()
        figs[name] = fig
    return figs
