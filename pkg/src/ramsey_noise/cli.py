"""Command-line scenario runner.

Every scenario reads one JSON document, writes CSV datasets and a JSON
summary into the output directory, and exits with 2 for invalid input, 3
when a resource cap is hit and 4 on numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from ramsey_noise import acquisition as acq
from ramsey_noise import analytic_gaussian as ag
from ramsey_noise import analytic_tls as at
from ramsey_noise import estimate as est
from ramsey_noise import simulate as sim
from ramsey_noise.core import (
    Colored,
    ConfigError,
    ExpCorrelated,
    NumericalError,
    OneOverF,
    RamseyProtocol,
    ResourceCapError,
    TlsEnsemble,
    TlsParams,
    White,
    asymmetric_tls_ladder,
    mean_frequency_shift,
    ramsey_probability,
    tls_ladder,
)

SCENARIOS = ("analytic", "simulate", "compare", "distribution", "spectrum")
TARGETS = (
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "fig3",
    "fig4",
    "fig5",
    "fig5d",
    "fig6",
    "fig7-spectrum",
    "tableD1",
    "psC1",
)
PROFILE_REPS = {"desk": 30, "paper": 300}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


def _kind(name: str, props: dict, required: tuple = ()) -> dict:
    return _obj({"kind": {"const": name}, **props}, ("kind",) + required)


_GAUSS_KINDS = {
    "white": ({"D_w": _nonneg}, ("D_w",)),
    "exp_correlated": ({"D_corr": _nonneg, "tau_corr": _pos}, ("D_corr", "tau_corr")),
    "colored": ({"D_clr": _nonneg, "omega_clr": _nonneg, "Gamma_clr": _pos}, ("D_clr", "omega_clr", "Gamma_clr")),
    "one_over_f": ({"D_fl": _nonneg, "omega_min": _pos}, ("D_fl", "omega_min")),
}

_TLS_ITEM = _obj({"V": _num, "W01": _nonneg, "W10": _nonneg}, ("V", "W01", "W10"))

_SOURCE_SCHEMAS = [
    _kind("none", {}),
    _kind("tls", {"tls": {"type": "array", "items": _TLS_ITEM}}, ("tls",)),
    _kind(
        "tls_ladder",
        {"n_tls": {"type": "integer", "minimum": 0}, "V": _num, "alpha": _pos, "n0": _num, "asymmetric": {"type": "boolean"}},
        ("n_tls", "V"),
    ),
    _kind("modulation", {"a_p": _num, "omega_p": _pos, "phase": {"type": ["number", "null"]}}, ("a_p", "omega_p")),
] + [_kind(name, {**props, "f0": {"type": ["number", "null"], "minimum": 0}}, req) for name, (props, req) in _GAUSS_KINDS.items()]

CONFIG_SCHEMA = _obj(
    {
        "scenario": {"enum": list(SCENARIOS)},
        "protocol": _obj({"t_R": _pos, "t_cyc": _pos, "phi_R": _num, "t_R_over_T2": _nonneg}),
        "noise": {
            "oneOf": _SOURCE_SCHEMAS
            + [_kind("composite", {"parts": {"type": "array", "items": {"oneOf": _SOURCE_SCHEMAS}, "minItems": 1}}, ("parts",))]
        },
        "run": _obj(
            {
                "N": _posint,
                "R": _posint,
                "dt": _pos,
                "k_corr": {"type": ["integer", "null"], "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "sigma_cyc": _nonneg,
                "threads": _posint,
                "antithetic": {"type": "boolean"},
            }
        ),
        "analysis": _obj(
            {
                "k_max": {"type": "integer", "minimum": 0},
                "triple_lags": {
                    "type": "array",
                    "items": {"type": "array", "items": _posint, "minItems": 2, "maxItems": 2},
                },
                "M": _posint,
                "spectrum": {"enum": ["outcome", "noise"]},
                "path_steps": _posint,
                "z_max": _pos,
            }
        ),
        "outputs": _obj({"prefix": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}, "save_bits": {"type": "boolean"}}),
    },
    ("noise",),
)

DEFAULTS = {
    "protocol": {"t_R": 1.0, "t_cyc": 3.0, "phi_R": math.pi / 4, "t_R_over_T2": 0.0},
    "run": {
        "N": 100_000,
        "R": 30,
        "dt": 0.1,
        "k_corr": None,
        "seed": 0,
        "sigma_cyc": 0.0,
        "threads": 1,
        "antithetic": False,
    },
    "analysis": {"k_max": 60, "triple_lags": [], "M": 100, "spectrum": "outcome", "path_steps": 1 << 20, "z_max": 3.0},
    "outputs": {"prefix": "scenario", "save_bits": False},
}


def resolve_config(raw: dict, scenario: str | None = None) -> dict:
    """Validate a config document and fill in every default; the result validates and resolves to itself."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = copy.deepcopy(raw)
    if scenario is not None:
        if cfg.get("scenario", scenario) != scenario:
            raise ConfigError(f"config declares scenario {cfg['scenario']!r} but {scenario!r} was requested")
        cfg["scenario"] = scenario
    cfg.setdefault("scenario", "simulate")
    for block, values in DEFAULTS.items():
        cfg[block] = {**values, **cfg.get(block, {})}
    cfg["analysis"]["triple_lags"] = [list(kl) for kl in cfg["analysis"]["triple_lags"]]
    for k, l in cfg["analysis"]["triple_lags"]:
        if not 0 < k < l:
            raise ConfigError(f"triple lag ({k}, {l}) must satisfy 0 < k < l")
    build_scenario(cfg)  # enforce physical invariants at parse time
    return cfg


def load_config(path: str | Path, scenario: str | None = None) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return resolve_config(raw, scenario)


# Turning a resolved config into objects.


@dataclass(frozen=True)
class Scenario:
    kind: str
    protocol: RamseyProtocol
    noise: sim.NoiseModel
    run: sim.SimulationConfig
    analysis: dict
    outputs: dict


def _source(part: dict, protocol: RamseyProtocol):
    kind = part["kind"]
    if kind == "none":
        return None
    if kind == "tls":
        return TlsEnsemble(tuple(TlsParams(t["V"], t["W01"], t["W10"]) for t in part["tls"]))
    if kind == "tls_ladder":
        if part.get("asymmetric", False):
            return asymmetric_tls_ladder(part["n_tls"], part["V"], alpha=part.get("alpha", 0.75))
        return tls_ladder(part["n_tls"], part["V"], alpha=part.get("alpha", 0.75), n0=part.get("n0", 0.0))
    if kind == "modulation":
        return sim.Modulation(part["a_p"], part["omega_p"], part.get("phase"))
    cls = {"white": White, "exp_correlated": ExpCorrelated, "colored": Colored, "one_over_f": OneOverF}[kind]
    params = {k: v for k, v in part.items() if k not in ("kind", "f0")}
    spec = cls(**params)
    if part.get("f0") is not None:
        spec = ag.scale_to_f0(spec, protocol, part["f0"])
    return spec


def build_noise(block: dict, protocol: RamseyProtocol) -> sim.NoiseModel:
    parts = block["parts"] if block["kind"] == "composite" else [block]
    tls, gaussian, modulation = [], None, None
    for part in parts:
        src = _source(part, protocol)
        if src is None:
            continue
        if isinstance(src, TlsEnsemble):
            tls.extend(src)
        elif isinstance(src, sim.Modulation):
            if modulation is not None:
                raise ConfigError("at most one modulation source is supported")
            modulation = src
        else:
            if gaussian is not None:
                raise ConfigError("at most one Gaussian source is supported")
            gaussian = src
    return sim.NoiseModel(TlsEnsemble(tuple(tls)), gaussian, modulation)


def build_scenario(cfg: dict) -> Scenario:
    protocol = RamseyProtocol(**cfg["protocol"])
    noise = build_noise(cfg["noise"], protocol)
    run = sim.SimulationConfig(**cfg["run"])
    if run.dt > protocol.t_R / 5 * (1 + 1e-12):
        raise ConfigError(f"dt = {run.dt} exceeds t_R / 5")
    return Scenario(cfg["scenario"], protocol, noise, run, cfg["analysis"], cfg["outputs"])


# Output helpers.


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class Outputs:
    """Writes CSV datasets and a JSON summary, each stamped with the resolved config."""

    def __init__(self, out_dir: Path, prefix: str, cfg: dict) -> None:
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.prefix = prefix
        self.cfg = cfg
        self.files: list[str] = []

    def _path(self, name: str, suffix: str) -> Path:
        path = self.dir / f"{self.prefix}_{name}{suffix}"
        self.files.append(path.name)
        return path

    def csv(self, name: str, columns: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(self.cfg, sort_keys=True) + "\n")
        buf.write(f"# seed: {self.cfg.get('run', {}).get('seed', '')}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
        path = self._path(name, ".csv")
        path.write_text(buf.getvalue())
        return path

    def npy(self, name: str, array: np.ndarray) -> Path:
        path = self._path(name, ".npy")
        np.save(path, array, allow_pickle=False)
        return path

    def summary(self, payload: dict) -> Path:
        path = self.dir / f"{self.prefix}_summary.json"
        body = {"config": self.cfg, "files": sorted(self.files), **payload}
        path.write_text(json.dumps(_jsonable(body), sort_keys=True, indent=2) + "\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


# Theory for a noise model.


def _only_tls(noise: sim.NoiseModel) -> bool:
    return noise.gaussian is None and noise.modulation is None


def _only_gaussian(noise: sim.NoiseModel) -> bool:
    return not len(noise.tls) and noise.modulation is None


@dataclass
class Theory:
    r1: float
    r2: np.ndarray  # lags 1..k_max
    r3: dict  # (k, l) -> value
    f: np.ndarray | None  # phase correlators, exact for Gaussian noise, Gaussian-equivalent for TLSs
    r3_exact: bool


def theory_for(noise: sim.NoiseModel, protocol: RamseyProtocol, k_max: int, triple_lags, *, r2_lags: int | None = None) -> Theory:
    """Closed-form predictions for pure TLS, pure Gaussian or noise-free models."""
    K = max([k_max, r2_lags or 0] + [l for _, l in triple_lags])
    if noise.modulation is not None:
        raise ConfigError("no closed-form correlators for modulated noise; use the spectrum scenario")
    if len(noise.tls) and noise.gaussian is not None:
        raise ConfigError("no closed-form correlators for combined TLS and Gaussian noise")
    if len(noise.tls):
        ens = noise.tls
        f = at.gaussian_equivalent_correlators(ens, protocol, K)
        r2 = np.array([at.r2_tls_centered(ens, protocol, k) for k in range(1, (r2_lags or k_max) + 1)])
        r3 = {tuple(kl): float(ag.r3_gauss_centered(f, protocol, *kl)) for kl in triple_lags}
        return Theory(at.r1_tls(ens, protocol), r2, r3, f, False)
    if noise.gaussian is not None:
        f = ag.phase_correlators(noise.gaussian, protocol, K).f
    else:
        f = np.zeros(K + 1)
    n2 = r2_lags or k_max
    r2 = ag.r2_gauss_centered(f, protocol, np.arange(1, n2 + 1)) if n2 else np.zeros(0)
    r3 = {tuple(kl): float(ag.r3_gauss_centered(f, protocol, *kl)) for kl in triple_lags}
    return Theory(ag.r1_gauss(f[0], protocol), np.asarray(r2), r3, f, True)


# Scenarios.


def run_analytic(sc: Scenario, out: Outputs) -> dict:
    a = sc.analysis
    lags = [tuple(kl) for kl in a["triple_lags"]]
    noise = sc.noise
    if not len(noise.tls) and noise.gaussian is None and noise.modulation is None:
        out.csv("analytic", ["quantity", "k", "l", "value"], [("r1", "", "", float(ramsey_probability(0.0, sc.protocol)))])
        return {"r1": float(ramsey_probability(0.0, sc.protocol))}
    th = theory_for(noise, sc.protocol, a["k_max"], lags)
    rows = [("r1", "", "", th.r1)]
    rows += [("r2", k, "", v) for k, v in enumerate(th.r2, start=1)]
    r3_name = "r3" if th.r3_exact else "r3_gauss_approx"
    rows += [(r3_name, k, l, v) for (k, l), v in th.r3.items()]
    f_name = "f" if th.r3_exact else "f_gauss_equiv"
    rows += [(f_name, k, "", v) for k, v in enumerate(th.f[: a["k_max"] + 1])]
    out.csv("analytic", ["quantity", "k", "l", "value"], rows)
    return {"r1": th.r1, "f0": float(th.f[0])}


def _simulate(sc: Scenario, k_max: int, lags):
    series = sim.run_experiment(sc.noise, sc.protocol, sc.run)
    group = 2 if sc.run.antithetic else 1
    return series, est.estimate_correlators(series, k_max, lags, group_size=group)


def run_simulate(sc: Scenario, out: Outputs) -> dict:
    a = sc.analysis
    lags = [tuple(kl) for kl in a["triple_lags"]]
    series, e = _simulate(sc, a["k_max"], lags)
    if sc.outputs["save_bits"]:
        out.npy("bits", np.stack([s.bits for s in series]))
    rows = [("r1", "", "", e.r1.value, e.r1.stderr)]
    rows += [("r2", k, "", c.value, c.stderr) for k, c in enumerate(e.r2, start=1)]
    rows += [("r3", k, l, c.value, c.stderr) for (k, l), c in e.r3.items()]
    out.csv("estimates", ["quantity", "k", "l", "value", "stderr"], rows)
    return {"r1": {"value": e.r1.value, "stderr": e.r1.stderr}, "N": sc.run.N, "R": sc.run.R}


def compare_rows(sc: Scenario, th: Theory, e, k_max: int) -> tuple[list, dict]:
    """Rows ``k, r2_theory, r2_sim, r2_stderr, r3_theory, r3_sim, r3_stderr`` and a pass/fail summary."""
    z_max = sc.analysis["z_max"]
    r3_by_k = {k: (kl, c) for kl, c in e.r3.items() for k in [kl[0]]}
    rows, worst2, worst3 = [], 0.0, 0.0
    for k in range(1, k_max + 1):
        c2 = e.r2[k - 1]
        z2 = abs(c2.value - th.r2[k - 1]) / c2.stderr if c2.stderr > 0 else math.inf
        worst2 = max(worst2, z2)
        row = [k, th.r2[k - 1], c2.value, c2.stderr, "", "", ""]
        if k in r3_by_k:
            kl, c3 = r3_by_k[k]
            row[4:] = [th.r3[kl], c3.value, c3.stderr]
            if th.r3_exact:
                worst3 = max(worst3, abs(c3.value - th.r3[kl]) / c3.stderr if c3.stderr > 0 else math.inf)
        rows.append(row)
    z1 = abs(e.r1.value - th.r1) / e.r1.stderr if e.r1.stderr > 0 else math.inf
    summary = {
        "r1": {"theory": th.r1, "sim": e.r1.value, "stderr": e.r1.stderr, "z": z1},
        "max_abs_z_r2": worst2,
        "max_abs_z_r3": worst3 if th.r3_exact else None,
        "r3_theory": "exact" if th.r3_exact else "gaussian_approximation",
        "z_max": z_max,
        "pass": bool(z1 <= z_max and worst2 <= z_max and (worst3 <= z_max or not th.r3_exact)),
    }
    return rows, summary


COMPARE_COLUMNS = ["k", "r2_theory", "r2_sim", "r2_stderr", "r3_theory", "r3_sim", "r3_stderr"]


def run_compare(sc: Scenario, out: Outputs, name: str = "compare") -> dict:
    a = sc.analysis
    lags = [tuple(kl) for kl in a["triple_lags"]]
    th = theory_for(sc.noise, sc.protocol, a["k_max"], lags)
    series, e = _simulate(sc, a["k_max"], lags)
    if sc.outputs["save_bits"]:
        out.npy(f"{name}_bits", np.stack([s.bits for s in series]))
    rows, summary = compare_rows(sc, th, e, a["k_max"])
    out.csv(name, COMPARE_COLUMNS, rows)
    return summary


def _static_distribution(noise: sim.NoiseModel, protocol: RamseyProtocol, M: int):
    if noise.modulation is not None or (len(noise.tls) and noise.gaussian is not None):
        return None
    if len(noise.tls):
        if len(noise.tls) > acq.STATIC_TLS_CAP:
            return None
        return acq.rho_static_tls(noise.tls, protocol, M)
    if noise.gaussian is not None:
        return acq.rho_static_gauss(float(ag.phase_correlator(noise.gaussian, protocol, 0)), protocol, M)
    return acq.rho_binomial(M, float(ramsey_probability(0.0, protocol)))


def distribution_dataset(sc: Scenario, M: int, *, with_variance: bool = True):
    """Simulated block histogram beside binomial and static-limit predictions."""
    acc = est.BlockHistogramAccumulator(M)
    for s in sim.iter_experiment(sc.noise, sc.protocol, sc.run):
        acc.add([s])
    hist = acc.result()
    counts_std = math.sqrt(M) * hist.std()
    payload = {"M": M, "blocks": acc.n_blocks, "sqrtM_sigma_sim": counts_std, "mean_sim": hist.mean()}
    static = _static_distribution(sc.noise, sc.protocol, M)
    r1 = None
    if _only_tls(sc.noise) or _only_gaussian(sc.noise):
        th = theory_for(sc.noise, sc.protocol, 0, [], r2_lags=M - 1 if with_variance else 0)
        r1 = th.r1
        if with_variance and M > 1:
            payload["sqrtM_sigma_theory"] = math.sqrt(M * acq.variance_predicted(M, th.r1, th.r2))
        payload["sqrtM_sigma_binom"] = math.sqrt(th.r1 * (1 - th.r1))
    binom = acq.rho_binomial(M, r1) if r1 is not None else None
    rows = []
    for m in range(M + 1):
        rows.append(
            [
                m,
                m / M,
                hist.probs[m],
                binom.probs[m] if binom is not None else "",
                static.probs[m] if static is not None else "",
            ]
        )
    if static is not None:
        payload["tv_static"] = acq.total_variation(hist, static)
    if binom is not None:
        payload["tv_binomial"] = acq.total_variation(hist, binom)
    return rows, payload


DISTRIBUTION_COLUMNS = ["m", "fraction", "p_sim", "p_binomial", "p_static"]


def run_distribution(sc: Scenario, out: Outputs, name: str = "distribution") -> dict:
    M = sc.analysis["M"]
    if sc.run.N < M:
        raise ConfigError(f"N = {sc.run.N} is shorter than the block size M = {M}")
    rows, payload = distribution_dataset(sc, M, with_variance=M <= 100_000)
    out.csv(name, DISTRIBUTION_COLUMNS, rows)
    return payload


def outcome_spectrum_dataset(sc: Scenario) -> tuple[list, dict]:
    series = sim.run_experiment(sc.noise, sc.protocol, sc.run)
    spec = est.outcome_power_spectrum(series)
    N = sc.run.N
    mod = sc.noise.modulation
    rows, payload = [], {"N": N, "R": sc.run.R, "convention": spec.convention}
    theory = None
    if mod is not None:
        A = mod.amplitude(sc.protocol)
        nu = mod.omega_p * sc.protocol.t_cyc / (2 * math.pi)
        m = np.arange(N)
        # the line and its mirror image, each evaluated on its own side
        theory = np.where(
            m <= N // 2,
            est.modulation_peak_theory(A, sc.protocol, N, mod.omega_p, m, sc.run.sigma_cyc),
            est.modulation_peak_theory(A, sc.protocol, N, mod.omega_p, N - m, sc.run.sigma_cyc),
        )
        peak_bin = int(round(N * nu))
        height, err = est.outcome_power_at(series, N * nu)
        payload.update(
            {
                "A_p": A,
                "line_bin": N * nu,
                "expected_peak_bin": peak_bin,
                "argmax_bin_lower": int(np.argmax(spec.R[1 : N // 2 + 1]) + 1),
                "argmax_bin_upper": int(np.argmax(spec.R[N // 2 :]) + N // 2),
                "power_at_line": height,
                "power_at_line_stderr": err,
                "power_at_peak_bin": float(spec.R[peak_bin]),
                "theory_at_line": float(est.modulation_peak_theory(A, sc.protocol, N, mod.omega_p, N * nu, sc.run.sigma_cyc)),
            }
        )
    for m in range(N):
        rows.append([m, spec.R[m], theory[m] if theory is not None else ""])
    return rows, payload


def noise_spectrum_dataset(sc: Scenario) -> tuple[list, dict]:
    if sc.noise.gaussian is not None or sc.noise.modulation is not None:
        raise ConfigError("noise spectrum estimation is available for TLS noise only")
    steps = sc.analysis["path_steps"]
    if steps * sc.run.R > sc.run.step_cap:
        raise ResourceCapError(f"{steps * sc.run.R:.3g} path steps exceed the cap of {sc.run.step_cap:.3g}")
    S = 0.0
    for rep in range(sc.run.R):
        path = sim.tls_frequency_path(sc.noise.tls, steps, sc.run.dt, sc.run.seed, rep) - mean_frequency_shift(sc.noise.tls)
        omega, S_rep = est.noise_power_spectrum(path, sc.run.dt)
        S = S + S_rep / sc.run.R
    centers, means, errs = est.log_binned(omega, S)
    theory = ag.tls_spectrum_theory(sc.noise.tls, centers)
    rows = [[w, s, e, t] for w, s, e, t in zip(centers, means, errs, theory)]
    slope = _one_over_f_slope(sc.noise.tls, centers, means)
    return rows, {"path_steps": steps, "R": sc.run.R, "dt": sc.run.dt, "log_slope": slope}


def _one_over_f_slope(ensemble: TlsEnsemble, omega: np.ndarray, S: np.ndarray) -> dict | None:
    """Least-squares log-log slope between the slowest and fastest TLS rates."""
    rates = sorted(t.W for t in ensemble)
    if not rates:
        return None
    lo, hi = rates[0] * 3, rates[-1] / 3
    sel = (omega >= lo) & (omega <= hi) & (S > 0)
    if sel.sum() < 3:
        return None
    slope = float(np.polyfit(np.log10(omega[sel]), np.log10(S[sel]), 1)[0])
    return {"omega_low": float(omega[sel].min()), "omega_high": float(omega[sel].max()), "slope": slope,
            "decades": float(np.log10(omega[sel].max() / omega[sel].min()))}


def run_spectrum(sc: Scenario, out: Outputs, name: str = "spectrum") -> dict:
    if sc.analysis["spectrum"] == "noise":
        rows, payload = noise_spectrum_dataset(sc)
        out.csv(name, ["omega", "S_sim", "S_stderr", "S_theory"], rows)
    else:
        rows, payload = outcome_spectrum_dataset(sc)
        out.csv(name, ["m", "R_sim", "R_theory"], rows)
    return payload


RUNNERS: dict[str, Callable[[Scenario, Outputs], dict]] = {
    "analytic": run_analytic,
    "simulate": run_simulate,
    "compare": run_compare,
    "distribution": run_distribution,
    "spectrum": run_spectrum,
}


def run_scenario(cfg: dict, out_dir: Path) -> Path:
    """Run one resolved scenario and return the path of its summary."""
    sc = build_scenario(cfg)
    out = Outputs(out_dir, sc.outputs["prefix"], cfg)
    payload = RUNNERS[sc.kind](sc, out)
    return out.summary({"scenario": sc.kind, "results": payload})


# Figure and table targets.  Parameters are fixed here; only run sizes follow the flags.


def _ladder_cfg(n_tls, V, n0=0.0, asymmetric=False):
    return {"kind": "tls_ladder", "n_tls": n_tls, "V": V, "alpha": 0.75, "n0": n0, "asymmetric": asymmetric}


def _single_tls(V, W):
    return {"kind": "tls", "tls": [{"V": V, "W01": W / 2, "W10": W / 2}]}


_TRIPLES = [[k, k + 3] for k in range(1, 41)]


def _target_configs(target: str) -> list[tuple[str, str, dict]]:
    """(dataset name, scenario, partial config) triples for a target."""
    corr = {"k_max": 60, "triple_lags": _TRIPLES}
    if target == "fig2a":
        return [
            ("v0.2", "compare", {"noise": _ladder_cfg(10, 0.2), "analysis": corr}),
            ("v2", "compare", {"noise": _ladder_cfg(10, 2.0), "analysis": corr}),
        ]
    if target == "fig2b":
        return [("single", "compare", {"noise": _single_tls(0.75, 0.001), "analysis": corr})]
    if target == "fig2c":
        return [("n0_7", "compare", {"noise": _ladder_cfg(5, 2.0, n0=7), "analysis": corr})]
    if target == "fig2d":
        return [
            ("symmetric", "compare", {"noise": _ladder_cfg(5, 0.2), "analysis": corr}),
            ("asymmetric", "compare", {"noise": _ladder_cfg(5, 0.2, asymmetric=True), "analysis": corr}),
        ]
    if target == "fig3":
        return [("ec", "compare", {"noise": {"kind": "exp_correlated", "D_corr": 6.51, "tau_corr": 20.0}, "analysis": corr})]
    if target == "fig4":
        return [
            ("wmin1e-3", "compare", {"noise": {"kind": "one_over_f", "D_fl": 0.04087, "omega_min": 1e-3, "f0": 0.16}, "analysis": corr}),
            ("wmin1e-5", "compare", {"noise": {"kind": "one_over_f", "D_fl": 0.02574, "omega_min": 1e-5, "f0": 0.16}, "analysis": corr}),
        ]
    if target in ("fig5", "fig5d"):
        out = []
        for M in (100, 30):
            for W in (0.02, 0.001):
                out.append((f"c_W{W}_M{M}", "distribution", {"noise": _single_tls(0.2, W), "analysis": {"M": M}}))
            for n0 in (5, 7):
                out.append((f"d_n0_{n0}_M{M}", "distribution", {"noise": _ladder_cfg(4, 0.2, n0=n0), "analysis": {"M": M}}))
        return out
    if target == "fig6":
        out = []
        for M in (100, 30):
            out += [
                (f"b_tau20_M{M}", "distribution", {"noise": {"kind": "exp_correlated", "D_corr": 0.41, "tau_corr": 20.0}, "analysis": {"M": M}}),
                (f"b_tau100_M{M}", "distribution", {"noise": {"kind": "exp_correlated", "D_corr": 32.11, "tau_corr": 100.0}, "analysis": {"M": M}}),
                (f"c_wmin1e-3_M{M}", "distribution", {"noise": {"kind": "one_over_f", "D_fl": 0.002575, "omega_min": 1e-3, "f0": 0.01}, "analysis": {"M": M}}),
                (f"c_wmin1e-5_M{M}", "distribution", {"noise": {"kind": "one_over_f", "D_fl": 0.02574, "omega_min": 1e-5, "f0": 0.16}, "analysis": {"M": M}}),
            ]
        return out
    if target == "fig7-spectrum":
        omega_p = 2 * math.pi * 0.0173 / 3.0
        out = []
        for N in (1 << 13, 1 << 14):
            out.append((f"nojitter_N{N}", "spectrum", {"noise": {"kind": "modulation", "a_p": 0.1, "omega_p": omega_p}, "run": {"N": N}}))
        sigma = math.sqrt(2 * 10 / (1 << 13)) / omega_p  # N * Delta_cyc = 10 at N = 2^13
        for N in (1 << 13, 1 << 14):
            out.append(
                (f"jitter_N{N}", "spectrum", {"noise": {"kind": "modulation", "a_p": 0.1, "omega_p": omega_p}, "run": {"N": N, "sigma_cyc": sigma}})
            )
        return out
    if target == "psC1":
        def c_ladder(n):
            # both switching rates equal exp(-alpha n)
            return {"kind": "tls", "tls": [{"V": 0.2, "W01": math.exp(-0.75 * k), "W10": math.exp(-0.75 * k)} for k in range(1, n + 1)]}

        return [
            ("tls10", "spectrum", {"noise": c_ladder(10), "analysis": {"spectrum": "noise", "path_steps": 1 << 22}, "run": {"R": 8}}),
            ("tls20", "spectrum", {"noise": c_ladder(20), "analysis": {"spectrum": "noise", "path_steps": 1 << 24}, "run": {"R": 4}}),
        ]
    if target == "tableD1":
        M = 10_000
        return [
            ("tls_n0_5", "distribution", {"noise": _ladder_cfg(4, 0.2, n0=5), "analysis": {"M": M}}),
            ("tls_n0_7", "distribution", {"noise": _ladder_cfg(4, 0.2, n0=7), "analysis": {"M": M}}),
            ("ec_tau20", "distribution", {"noise": {"kind": "exp_correlated", "D_corr": 6.51, "tau_corr": 20.0, "f0": 0.16}, "analysis": {"M": M}}),
            ("ec_tau100", "distribution", {"noise": {"kind": "exp_correlated", "D_corr": 32.11, "tau_corr": 100.0, "f0": 0.16}, "analysis": {"M": M}}),
            ("oof_wmin1e-3", "distribution", {"noise": {"kind": "one_over_f", "D_fl": 0.04087, "omega_min": 1e-3, "f0": 0.16}, "analysis": {"M": M}}),
            ("oof_wmin1e-5", "distribution", {"noise": {"kind": "one_over_f", "D_fl": 0.02574, "omega_min": 1e-5, "f0": 0.16}, "analysis": {"M": M}}),
        ]
    raise ConfigError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")


def _run_sizes(target: str, scenario: str, profile: str, overrides: dict) -> dict:
    run: dict[str, Any] = {}
    if scenario == "distribution":
        M = 10_000 if target == "tableD1" else 100
        blocks = {"desk": 10_000, "paper": 100_000}[profile]
        if target == "tableD1":
            run.update({"N": 100_000, "R": blocks // 10})
        else:
            # one long record per repetition keeps slow TLSs stationary across blocks
            run.update({"N": 100 * M, "R": max(2, blocks // 100)})
    elif scenario == "spectrum":
        run.update({"R": PROFILE_REPS[profile] if target == "fig7-spectrum" else None})
    else:
        run.update({"N": 100_000, "R": PROFILE_REPS[profile]})
    run = {k: v for k, v in run.items() if v is not None}
    run.update({k: v for k, v in overrides.items() if v is not None})
    return run


def reproduce(target: str, out_dir: Path, *, profile: str = "desk", overrides: dict | None = None) -> Path:
    """Write every dataset of a figure or table target into ``out_dir/target``."""
    if target not in TARGETS:
        raise ConfigError(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    overrides = overrides or {}
    folder = Path(out_dir) / target
    results = {}
    for name, scenario, partial in _target_configs(target):
        raw = copy.deepcopy(partial)
        raw["scenario"] = scenario
        run = {**raw.get("run", {}), **_run_sizes(target, scenario, profile, overrides)}
        raw["run"] = run
        raw["outputs"] = {"prefix": name}
        cfg = resolve_config(raw)
        sc = build_scenario(cfg)
        out = Outputs(folder, name, cfg)
        payload = RUNNERS[scenario](sc, out)
        payload.update(_target_extras(target, name, sc, out))
        out.summary({"scenario": scenario, "target": target, "results": payload})
        results[name] = payload
    index = {"target": target, "profile": profile, "datasets": results}
    index.update(_target_index(target, results))
    path = folder / "index.json"
    path.write_text(json.dumps(_jsonable(index), sort_keys=True, indent=2) + "\n")
    return path


def _target_extras(target: str, name: str, sc: Scenario, out: Outputs) -> dict:
    """Additional theory curves a figure shows beside the main comparison."""
    p, k = sc.protocol, np.arange(1, 61)
    extras: dict = {}
    if target.startswith("fig2"):
        ens = sc.noise.tls
        f = at.gaussian_equivalent_correlators(ens, p, 63)
        rows = []
        short = at.approx_r2(ens, p, k, "short") if len(ens) else None
        for kk in k:
            row = [kk, ag.r2_gauss_centered(f, p, kk), ag.r3_gauss_centered(f, p, kk, kk + 3)]
            row.append(short[kk - 1] if short is not None else "")
            rows.append(row)
        out.csv("approximations", ["k", "r2_gauss_equiv", "r3_gauss_equiv", "r2_short_time"], rows)
        if target == "fig2c":
            parts = [[kk] + [at.r2_tls_centered(TlsEnsemble((t,)), p, kk) for t in ens] for kk in k]
            out.csv("partials", ["k"] + [f"r2_tls{n}" for n in range(1, len(ens) + 1)], parts)
    if target == "fig4":
        spec = sc.noise.gaussian
        logs = ag.log_approx_f_k(spec, p, k)
        f = ag.phase_correlators(spec, p, 60).f
        out.csv("log_approximation", ["k", "f_k", "f_k_log_approx"], [[kk, f[kk], logs[kk - 1]] for kk in k])
    return extras


def _target_index(target: str, results: dict) -> dict:
    extra: dict = {}
    if target == "fig7-spectrum":
        for tag in ("nojitter", "jitter"):
            a, b = results[f"{tag}_N8192"], results[f"{tag}_N16384"]
            extra[f"{tag}_ratio_at_line"] = b["power_at_line"] / a["power_at_line"]
            extra[f"{tag}_ratio_at_peak_bin"] = b["power_at_peak_bin"] / a["power_at_peak_bin"]
    if target == "tableD1":
        extra["rows"] = {name: r.get("sqrtM_sigma_sim") for name, r in results.items()}
        extra["binomial"] = next(iter(results.values())).get("sqrtM_sigma_binom")
    return extra


# Entry point.


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="root seed (overrides the config)")
    p.add_argument("--reps", type=int, help="number of repetitions R")
    p.add_argument("--cycles", type=int, help="cycles per repetition N")
    p.add_argument("--threads", type=int, help="worker threads for repetitions")
    p.add_argument("--out-dir", default="out", help="directory for datasets (default: out)")
    p.add_argument("--tolerance-profile", choices=("desk", "paper"), default="desk",
                   help="run sizes: desk (R=30) or paper (R=300)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ramsey-noise", description="Repeated-Ramsey noise analytics and Monte Carlo.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS + ("run",):
        p = sub.add_parser(name, help=f"run a {name} scenario from a JSON config" if name != "run" else "run the scenario a config declares")
        p.add_argument("config", help="path to a JSON scenario config")
        _add_common(p)
    p = sub.add_parser("reproduce", help="write the datasets of a figure or table")
    p.add_argument("target", choices=TARGETS)
    _add_common(p)
    return parser


def _overrides(args) -> dict:
    return {"seed": args.seed, "R": args.reps, "N": args.cycles, "threads": args.threads}


def _apply_overrides(raw: dict, args) -> dict:
    raw = copy.deepcopy(raw)
    run = raw.setdefault("run", {})
    for key, value in _overrides(args).items():
        if value is not None:
            run[key] = value
    if args.reps is None and args.tolerance_profile == "paper":
        run["R"] = PROFILE_REPS["paper"]
    return raw


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "reproduce":
            path = reproduce(args.target, Path(args.out_dir), profile=args.tolerance_profile, overrides=_overrides(args))
        else:
            try:
                raw = json.loads(Path(args.config).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
            scenario = None if args.command == "run" else args.command
            cfg = resolve_config(_apply_overrides(raw, args), scenario)
            path = run_scenario(cfg, Path(args.out_dir))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ResourceCapError as exc:
        print(f"error: resource cap exceeded: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 4
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
