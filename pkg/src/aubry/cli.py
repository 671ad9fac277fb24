"""Batch command line front-end.

    aubry <command> --config run.json --out results/ [--workers N] [--strict]

Commands: cocycle, ids, duality, multidim, model-info, cf. Every CSV starts
with a ``# config_sha256=...`` line; report.json echoes the config.
Exit codes: 0 ok, 2 threshold violated (--strict), 3 invalid input, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import cocycle, duality, model, spectral
from .errors import AubryError, ConfigError, NumericalError, ValidationError

EXIT_OK, EXIT_THRESHOLD, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3, 4

# knob: (type, lo, hi, default)
KNOBS = {
    "cocycle": {
        "iterates": (int, 1000, 10**8, 100_000),
        "phases": (int, 1, 4096, 8),
    },
    "ids": {
        "N": (int, 100, 100_000, 2000),
        "phases": (int, 1, 4096, 64),
        "kind": (str, None, None, "direct"),
        "box": (int, 3, 4000, 2000),
        "thetas": (int, 1, 4096, 64),
        "min_width": (float, 0.0, 100.0, 0.05),
        "k_max": (int, 0, 50, 10),
    },
    "duality": {
        "theta": (float, -1e6, 1e6, 0.13),
        "box": (int, 3, 4000, 1000),
        "grid": (int, 16, 1 << 20, 2048),
        "central_pairs": (int, 1, 4000, 20),
        "conj_pairs": (int, 1, 4000, 5),
        "probes": (int, 1, 4000, 10),
        "k_max": (int, 0, 2000, 50),
        "ids_N": (int, 100, 100_000, 4000),
        "ids_phases": (int, 1, 4096, 32),
        "ids_energies": (int, 10, 10**6, 4001),
        "iterates": (int, 1000, 10**8, 100_000),
        "rho_phases": (int, 1, 4096, 8),
    },
    "multidim": {
        "theta": (float, -1e6, 1e6, 0.13),
        "box": (list, None, None, [30, 30]),
    },
    "model-info": {},
    "cf": {"terms": (int, 1, 60, 30)},
}

DEFAULT_THRESHOLDS = {
    "duality": {
        "bloch_residual": 1e-6,
        "det_constancy": 1e-4,
        "conj_residual": 1e-3,
        "completeness_mass": 0.999,
        "label_match": 5e-3,
    },
}
# thresholds that are lower bounds; everything else is an upper bound
LOWER_BOUNDS = {"completeness_mass", "median_ipr", "min_lyapunov"}


def _line_of(text, path):
    """Best-effort line number of a key path in a JSON document."""
    pos, line = 0, None
    for key in path:
        i = text.find(f'"{key}"', pos)
        if i < 0:
            break
        pos = i + 1
        line = text.count("\n", 0, i) + 1
    return line


@dataclass
class RunConfig:
    command: str
    model: dict
    task: dict
    thresholds: dict = field(default_factory=dict)
    text: str = ""

    @classmethod
    def from_text(cls, text, command):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(e.msg, e.lineno) from None
        if not isinstance(doc, dict):
            raise ConfigError("top level must be an object", 1)
        unknown = set(doc) - {"model", "task", "thresholds"}
        if unknown:
            k = sorted(unknown)[0]
            raise ConfigError(f"unknown section {k!r}", _line_of(text, [k]))
        cfg = cls(command, doc.get("model", {}), dict(doc.get("task", {})), dict(doc.get("thresholds", {})), text)
        cfg._validate()
        return cfg

    @classmethod
    def load(cls, path, command):
        try:
            with open(path) as fh:
                return cls.from_text(fh.read(), command)
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None

    def _validate(self):
        knobs = KNOBS[self.command]
        for k in self.task:
            if k not in knobs and k != "energies":
                raise ConfigError(f"unknown task knob {k!r}", _line_of(self.text, ["task", k]))
        for k, (typ, lo, hi, default) in knobs.items():
            val = self.task.get(k, default)
            where = _line_of(self.text, ["task", k])
            if typ is int and (not isinstance(val, int) or isinstance(val, bool)):
                raise ConfigError(f"{k} must be an integer", where)
            if typ is float and not isinstance(val, (int, float)):
                raise ConfigError(f"{k} must be a number", where)
            if typ in (int, float) and not (lo <= val <= hi):
                raise ConfigError(f"{k} = {val} outside [{lo}, {hi}]", where)
            self.task[k] = val
        for k, val in self.thresholds.items():
            if not isinstance(val, (int, float)) or not math.isfinite(val):
                raise ConfigError(f"threshold {k} must be a finite number", _line_of(self.text, ["thresholds", k]))
        if self.command in ("cocycle", "ids") and "energies" not in self.task:
            self.task["energies"] = {"count": 40}

    @property
    def document(self):
        return {"model": self.model, "task": self.task, "thresholds": self.thresholds}

    @property
    def sha256(self):
        canon = json.dumps({"command": self.command, **self.document}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # -- model pieces --

    def frequency(self):
        if "alpha" not in self.model:
            raise ConfigError("model.alpha is required", _line_of(self.text, ["model"]))
        where = _line_of(self.text, ["model", "alpha"])
        try:
            return model.frequency_from_config(self.model["alpha"])
        except ValidationError as e:
            raise type(e)(f"line {where}: {e}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad frequency: {e}", where) from None

    def potential(self, d):
        raw = self.model.get("potential", [])
        where = _line_of(self.text, ["model", "potential"])
        try:
            if isinstance(raw, dict):
                if set(raw) != {"cosine"}:
                    raise ConfigError("potential object must be {\"cosine\": amplitude}", where)
                amp = float(raw["cosine"])
                if d == 1:
                    return model.TrigPotential.cosine(amp)
                coeffs = {}
                for ax in range(d):
                    for s in (1, -1):
                        e = [0] * d
                        e[ax] = s
                        coeffs[tuple(e)] = complex(amp)
                return model.TrigPotential(coeffs)
            v = model.potential_from_config(raw, d)
        except ConfigError:
            raise
        except ValidationError as e:
            raise type(e)(f"line {where}: {e}") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad potential: {e}", where) from None
        if v.dim != d:
            raise ConfigError(f"potential has dimension {v.dim}, frequency has {d}", where)
        return v

    def coupling(self):
        lam = self.model.get("coupling", 1.0)
        if not isinstance(lam, (int, float)) or lam < 0:
            raise ConfigError("coupling must be a nonnegative number", _line_of(self.text, ["model", "coupling"]))
        return float(lam)

    def energies(self, v, coupling=0.0, hopping=2.0):
        raw = self.task["energies"]
        where = _line_of(self.text, ["task", "energies"])
        if isinstance(raw, list):
            grid = np.array(raw, dtype=float)
        elif isinstance(raw, dict):
            count = raw.get("count", 40)
            if not isinstance(count, int) or count < 0:
                raise ConfigError("energies.count must be a nonnegative integer", where)
            if "min" in raw or "max" in raw:
                grid = np.linspace(float(raw["min"]), float(raw["max"]), count)
            else:
                grid = spectral.energy_grid(v, count, coupling, hopping)
        else:
            raise ConfigError("energies must be a list or {min, max, count}", where)
        if grid.size == 0:
            raise ConfigError("empty energy grid", where)
        if np.any(np.diff(grid) < 0):
            raise ConfigError("energy grid must be sorted", where)
        return grid


@dataclass
class RunReport:
    config: dict
    config_sha256: str
    results: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    wall_clock: float = 0.0

    def to_dict(self):
        return {
            "config": self.config,
            "config_sha256": self.config_sha256,
            "results": self.results,
            "diagnostics": self.diagnostics,
            "violations": self.violations,
            "artifacts": self.artifacts,
            "wall_clock_s": self.wall_clock,
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


class Writer:
    def __init__(self, out, cfg: RunConfig, report: RunReport):
        self.out, self.cfg, self.report = out, cfg, report
        os.makedirs(out, exist_ok=True)

    def csv(self, name, header, rows):
        path = os.path.join(self.out, name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_sha256={self.cfg.sha256}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in r])
        self.report.artifacts.append(name)

    def finish(self):
        self.report.artifacts.append("report.json")
        with open(os.path.join(self.out, "report.json"), "w") as fh:
            json.dump(_jsonable(self.report.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _check(report, name, value, limit):
    lower = name in LOWER_BOUNDS
    ok = value >= limit if lower else value <= limit
    if not ok:
        report.violations.append({"name": name, "value": value, "limit": limit, "bound": "lower" if lower else "upper"})


# -- commands ------------------------------------------------------------------

def cmd_cocycle(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    v = cfg.potential(a.d)
    E = cfg.energies(v)
    t = cfg.task
    r = cocycle.sweep(v, a, E, t["iterates"], t["phases"], workers=workers)
    rows = zip(E, r.lyapunov, r.lyapunov_half, np.abs(r.lyapunov - r.lyapunov_half),
               r.rotation, r.rotation_half, np.abs(r.rotation - r.rotation_half), 1.0 - 2.0 * r.rotation)
    w.csv("cocycle.csv", ["E", "lyapunov", "lyapunov_half", "lyapunov_delta", "rotation", "rotation_half",
                          "rotation_delta", "ids"], rows)
    rep = w.report
    rep.results.update({"energies": int(E.size), "max_lyapunov": float(r.lyapunov.max()),
                        "min_lyapunov": float(r.lyapunov.min())})
    rep.diagnostics.update({"max_lyapunov_delta": float(np.abs(r.lyapunov - r.lyapunov_half).max()),
                            "max_rotation_delta": float(np.abs(r.rotation - r.rotation_half).max()),
                            "ambiguous_steps": int(r.ambiguous.sum())})
    for k, lim in cfg.thresholds.items():
        val = rep.results.get(k, rep.diagnostics.get(k))
        if val is not None:
            _check(rep, k, val, lim)


def cmd_ids(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    v = cfg.potential(a.d)
    lam = cfg.coupling()
    t = cfg.task
    kind = t["kind"]
    if kind not in ("direct", "dual", "both"):
        raise ConfigError("kind must be direct, dual or both", _line_of(cfg.text, ["task", "kind"]))
    E = cfg.energies(v, lam)
    rep = w.report
    curves = {}
    if kind in ("direct", "both"):
        curves["direct"] = spectral.ids_direct(v, a, E, t["N"], t["phases"], workers=workers)
    if kind in ("dual", "both"):
        box = t["box"] if a.d == 1 else [int(round(t["box"] ** 0.5))] * a.d
        curves["dual"] = spectral.ids_dual(v, a, t["thetas"], E, box, lam, workers=workers)
    for name, c in curves.items():
        w.csv(f"ids_{name}.csv", ["E", "N"], zip(c.energies, c.values))
    if len(curves) == 2:
        rep.results["ids_distance"] = curves["direct"].sup_distance(curves["dual"])
    main = curves.get("direct", curves.get("dual"))
    gaps = spectral.label_gaps(spectral.find_gaps(main, t["min_width"]), a, t["k_max"])
    header = ["gap_lo", "gap_hi", "N_gap"] + [f"k{i + 1}" for i in range(a.d)] + ["mismatch"]
    w.csv("gaps.csv", header, [(g.lo, g.hi, g.n_gap, *g.label, g.mismatch) for g in gaps])
    rep.results["gaps"] = [{"lo": g.lo, "hi": g.hi, "N_gap": g.n_gap, "label": list(g.label),
                            "mismatch": g.mismatch} for g in gaps]
    rep.results["max_label_mismatch"] = max((g.mismatch for g in gaps), default=0.0)
    rep.results["max_label"] = max((max(abs(c) for c in g.label) for g in gaps), default=0)
    for k, lim in cfg.thresholds.items():
        if k in rep.results:
            _check(rep, k, rep.results[k], lim)


def run_duality(v, a, theta, box, task, workers=1):
    """The dual-localization pipeline; returns (report, label rows, mass rows, per-pair rows)."""
    win = model.build_dual_window(v, a, theta, box)
    pairs = duality.dual_eigenpairs(win)
    central = sorted(pairs, key=lambda p: (abs(p.center[0]), p.center[0]))
    grid = spectral.energy_grid(v, task["ids_energies"])
    ids = spectral.ids_direct(v, a, grid, task["ids_N"], task["ids_phases"], workers=workers)
    rep = duality.completeness_report(
        pairs, theta, a, [(l,) for l in range(-(task["probes"] // 2), task["probes"] - task["probes"] // 2)],
        ids, task["k_max"])
    rep.bloch_residual = max(duality.bloch_solution_residual(p.vector, p.energy, v, a, theta)
                             for p in central[: task["central_pairs"]])
    dets, conj = [], []
    for p in central[: task["conj_pairs"]]:
        Fg = duality.build_F(p.vector, theta, a, task["grid"])
        Bg = duality.conjugation_from_F(Fg, a, theta)
        rho = cocycle.sweep(v, a, [p.energy], task["iterates"], task["rho_phases"]).rotation[0]
        dets.append(Fg.det_constancy)
        conj.append(duality.reducibility_residual(Bg, v, p.energy, a, rho))
    rep.det_constancy = max(dets)
    rep.conj_residual = max(conj)
    by_energy = {p.energy: p for p in pairs}
    rows = []
    for k, Ek, Et in rep.labels:
        p = by_energy.get(Ek)
        rate, P = math.nan, math.nan
        if p is not None:
            P = duality.ipr(p.vector)
            try:
                rate = duality.localization_fit(p.vector).decay_rate
            except NumericalError:
                pass
        rows.append((k, Ek, Et, k, rate, P))
    return rep, rows


def cmd_duality(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    if a.d != 1:
        raise ValidationError("duality pipeline needs d = 1")
    v = cfg.potential(1)
    t = cfg.task
    rep, rows = run_duality(v, a, t["theta"], t["box"], t, workers)
    w.csv("labels.csv", ["k", "E_k", "E_theta_plus_k_alpha", "center", "decay_rate", "IPR"], rows)
    w.csv("completeness.csv", ["l", "completeness_mass"],
          [(k[0], m) for k, m in rep.completeness_mass.items()])
    out = rep.to_dict()
    w.report.results.update(out)
    limits = {**DEFAULT_THRESHOLDS["duality"], **cfg.thresholds}
    checks = {"bloch_residual": rep.bloch_residual, "det_constancy": rep.det_constancy,
              "conj_residual": rep.conj_residual, "completeness_mass": out["min_completeness_mass"],
              "label_match": rep.label_match}
    for k, lim in limits.items():
        if k in checks:
            _check(w.report, k, checks[k], lim)


def run_multidim(v, a, theta, box, lam):
    win = model.build_dual_window(v, a, theta, box, lam)
    pairs = duality.dual_eigenpairs(win)
    rows = []
    for i, p in enumerate(pairs):
        try:
            rate = duality.localization_fit(p.vector).decay_rate
        except NumericalError:
            rate = math.nan
        rows.append((i, p.energy, *p.center, rate, duality.ipr(p.vector)))
    keep = duality.interior_mask(pairs, win.box.lo, win.box.shape)
    U = np.stack([p.vector.amps for p in pairs], axis=1)
    W = np.abs(U) ** 2
    centre = np.all(np.abs(win.sites - win.box.center()) <= np.array(win.box.shape) / 6.0, axis=1)
    mass = W[centre][:, keep].sum(axis=1)
    rates = np.array([r[-2] for r in rows])
    iprs = np.array([r[-1] for r in rows])
    summary = {
        "median_ipr": float(np.median(iprs)),
        "median_decay_rate": float(np.nanmedian(rates)) if np.isfinite(rates).any() else math.nan,
        "min_interior_mass": float(mass.min()) if mass.size else math.nan,
        "fits": int(np.isfinite(rates).sum()),
    }
    return summary, rows


def cmd_multidim(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    if a.d != 2:
        raise ValidationError("multidim needs a two-component frequency")
    v = cfg.potential(2)
    lam = cfg.coupling()
    if lam <= 0:
        raise ValidationError("multidim needs coupling > 0")
    box = cfg.task["box"]
    if not (isinstance(box, list) and len(box) == 2 and all(isinstance(b, int) for b in box)):
        raise ConfigError("box must be two integers", _line_of(cfg.text, ["task", "box"]))
    if max(box) > 40:
        raise ConfigError("boxes are limited to 40x40", _line_of(cfg.text, ["task", "box"]))
    summary, rows = run_multidim(v, a, cfg.task["theta"], box, lam)
    w.csv("localization.csv", ["index", "E", "center_1", "center_2", "decay_rate", "IPR"], rows)
    w.report.results.update(summary)
    for k, lim in cfg.thresholds.items():
        if k in summary:
            _check(w.report, k, summary[k], lim)


def cmd_model_info(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    v = cfg.potential(a.d)
    lam = cfg.coupling()
    w.csv("potential.csv", [f"k{i + 1}" for i in range(v.dim)] + ["re", "im"],
          [(*k, c.real, c.imag) for k, c in sorted(v.coeffs.items())])
    w.report.results.update({
        "d": a.d, "alpha": list(a.components), "degree": v.degree, "l1_norm": v.l1_norm,
        "real_even": v.is_real_even, "coupling": lam,
        "direct_spectral_bound": spectral.spectral_bound(v),
        "dual_spectral_bound": spectral.spectral_bound(v, lam, hopping=0.0),
    })


def cmd_cf(cfg: RunConfig, w: Writer, workers=1):
    a = cfg.frequency()
    rows = []
    info = []
    for i, c in enumerate(a.cf):
        if not a.exact:
            c = model.continued_fraction(a.components[i], cfg.task["terms"])
        beta = model.beta_profile(c)
        for n in range(1, len(c.quotients) + 1):
            p, q = c.convergents[n]
            rows.append((i + 1, n, c.quotients[n - 1], p, q, float(beta[n - 1]) if n <= beta.size else math.nan))
        try:
            b = model.beta_exponent(c)
            info.append({"component": i + 1, "beta": b.value, "beta_index": b.index})
        except ValidationError:
            info.append({"component": i + 1, "beta": None})
    w.csv("cf.csv", ["component", "n", "a_n", "p_n", "q_n", "log_q_next_over_q"], rows)
    w.report.results["beta"] = info


COMMANDS = {
    "cocycle": cmd_cocycle,
    "ids": cmd_ids,
    "duality": cmd_duality,
    "multidim": cmd_multidim,
    "model-info": cmd_model_info,
    "cf": cmd_cf,
}


def build_parser():
    p = argparse.ArgumentParser(prog="aubry", description="Aubry duality numerics")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", default="out")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--strict", action="store_true", help="exit 2 when a threshold is violated")
    return p


def run(argv=None):
    """Run one command; returns (exit code, report or None)."""
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INVALID, None
    t0 = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config, args.command)
        report = RunReport(cfg.document, cfg.sha256)
        w = Writer(args.out, cfg, report)
        COMMANDS[args.command](cfg, w, args.workers)
    except ValidationError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID, None
    except NumericalError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL, None
    except AubryError as e:  # pragma: no cover
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL, None
    report.wall_clock = time.perf_counter() - t0
    w.finish()
    for viol in report.violations:
        print(f"threshold {viol['name']}: {viol['value']:.3e} vs {viol['bound']} bound {viol['limit']}",
              file=sys.stderr)
    if args.strict and report.violations:
        return EXIT_THRESHOLD, report
    return EXIT_OK, report


def main(argv=None):
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
