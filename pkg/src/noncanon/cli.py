"""Command-line front end.

    noncanon <command> [--config FILE] [--seed S] [--out DIR] [--plot] [--key value ...]

``--key value`` overrides a scalar entry of ``parameters``; nested entries use
dots (``--profile.K 100``). Exit codes: 0 success, 1 numerical failure,
2 configuration error, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import amplitude as amp
from . import combinatorics as comb
from . import kernels
from . import propagator as pg
from ._csvio import fmt, render
from .fockspace import DimensionCapError, TruncationError
from .model import CoherentSpec, CurrentSpec, ModeSet, build_mode_set, profile_from_dict

log = logging.getLogger("noncanon")

try:
    from importlib.metadata import version as _version

    VERSION = _version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    VERSION = "0.1.0"

COMMANDS = ("combinatorics", "excitations", "amplitude", "thermo-limit", "propagator", "radiation", "renorm-sweep")

DEFAULTS = {
    "combinatorics": {"N": 10, "m": 3, "brute_force": False},
    "excitations": {
        "profile": {"family": "flat-cutoff", "K": 2.0},
        "omega_min": 0.1, "omega_max": 2.0, "M": 8,
        "alpha_re": 0.7, "alpha_im": 0.0, "alpha_shape": "constant",
        "N_list": [1, 2, 4, 8, 16, 32], "m_max": 30,
    },
    "amplitude": {"C": 1.0, "omega": 1.0, "modes": 1, "spacing": 0.1, "detuning": 0.0, "t_max": 10.0, "h": 0.02,
                  "method": "volterra"},
    "thermo-limit": {"C": 0.3, "omega": 1.0, "modes": 8, "spacing": 0.1, "detuning": 0.0, "t_max": 10.0, "n_t": 201,
                     "N_list": [1, 2, 4, 8, 16, 32], "samples": 4000, "chunk": 500, "method": "monte-carlo"},
    "propagator": {"profile": {"family": "flat-cutoff", "K": 50.0}, "r": 10.0, "t_min": 0.0, "t_max": 20.0,
                   "n_t": 401, "lightcone": True},
    "radiation": {"profile": {"family": "flat-cutoff", "K": 10.0}, "g": 1.0, "eps_min": 1e-6, "eps_max": 1e-2,
                  "n_eps": 25},
    "renorm-sweep": {"omega0": 1.0, "lam1": 0.5, "width": 2.0, "spacing": 0.05, "coupling_times_plateau": 0.003,
                     "doublings": 3, "t_max": 10.0, "n_t": 201},
}

BRUTE_FORCE_CAP = 10**8
SAMPLE_CAP = 10**7
GRID_CAP = 10**6


class ConfigError(ValueError):
    pass


class ResourceCapError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _schema() -> dict:
    text = resources.files("noncanon").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


def _parse_scalar(text: str):
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return text
    return value


def _parse_overrides(tokens: list[str]) -> dict:
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"flag --{key} needs a value")
            raw = tokens[i + 1]
            i += 2
        value = _parse_scalar(raw)
        if isinstance(value, (list, dict)):
            raise ConfigError(f"--{key}: flags only override scalar fields")
        out[key.replace("-", "_") if "." not in key else key] = value
    return out


def _apply_override(params: dict, key: str, value):
    parts = key.split(".")
    node = params
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"--{key}: {p!r} is not a nested parameter")
        node = node[p]
    if isinstance(node.get(parts[-1]), (list, dict)):
        raise ConfigError(f"--{key}: flags only override scalar fields")
    node[parts[-1]] = value


def load_config(command: str, path: str | None, overrides: dict, seed=None, out=None) -> dict:
    """Merge defaults, the config file and flag overrides, then validate."""
    doc = {"command": command, "seed": 0, "output_dir": "noncanon-out", "parameters": {}}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if user.get("command", command) != command:
            raise ConfigError(f"config command {user['command']!r} does not match {command!r}")
        doc.update(user)
    if command not in DEFAULTS:
        raise ConfigError(f"unknown command {command!r}")
    params = copy.deepcopy(DEFAULTS[command])
    user_params = doc.get("parameters", {})
    if not isinstance(user_params, dict):
        raise ConfigError("'parameters' must be an object")
    if "profile" in user_params:
        params.pop("profile", None)
    params.update(user_params)
    for k, v in overrides.items():
        _apply_override(params, k, v)
    doc["parameters"] = params
    if seed is not None:
        doc["seed"] = seed
    if out is not None:
        doc["output_dir"] = out
    validate_document(doc)
    return doc


def validate_document(doc: dict):
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        if e.validator == "additionalProperties":
            extra = sorted(set(e.instance) - set(e.schema.get("properties", {})))
            raise ConfigError(f"{where}: unknown key(s) {', '.join(map(repr, extra))}")
        raise ConfigError(f"{where}: {e.message}")


# ---------------------------------------------------------------------------
# experiments; each returns ({file name: csv text}, diagnostics)


def _window(p: dict) -> tuple[amp.CouplingModel, ModeSet]:
    M = p["modes"]
    omega = p["omega"] + p["spacing"] * (np.arange(M) - (M - 1) / 2)
    if np.any(omega <= 0):
        raise ConfigError("parameters.spacing: mode window extends to nonpositive frequencies")
    modes = ModeSet(omega, np.ones(M), {"grid": "equal-window", "omega": p["omega"], "spacing": p["spacing"]})
    return amp.CouplingModel(p["C"], p["omega"] - p["detuning"], modes), modes


def _time_grid(t_max: float, n: int) -> np.ndarray:
    if n > GRID_CAP:
        raise ResourceCapError(f"time grid of {n} points exceeds {GRID_CAP}")
    return np.linspace(0.0, t_max, n)


def run_combinatorics(p, seed):
    N, m = p["N"], p["m"]
    table = comb.class_probabilities(N, m)
    outputs = {"classes.csv": comb.class_table_csv(table), "coincidences.csv": comb.coincidence_csv(table)}
    diag = {"classes": len(table.entries)}
    if p["brute_force"]:
        if N**m > BRUTE_FORCE_CAP:
            raise ResourceCapError(f"brute force needs N**m = {N**m} tuples (cap {BRUTE_FORCE_CAP})")
        hist = kernels.coincidence_histogram(N, m)
        agree = all(hist.get(cls.parts, 0) == cnt for cls, (cnt, _) in table.entries.items())
        diag["brute_force_agrees"] = bool(agree)
        if not agree:
            raise ArithmeticError("closed-form class counts disagree with enumeration")
    return outputs, diag


def run_excitations(p, seed):
    if not p["omega_max"] > p["omega_min"]:
        raise ConfigError("parameters.omega_max: must exceed omega_min")
    modes = build_mode_set(profile_from_dict(p["profile"]), p["omega_min"], p["omega_max"], p["M"])
    a = complex(p["alpha_re"], p["alpha_im"])
    if p["alpha_shape"] == "constant":
        alpha = CoherentSpec.constant(a, modes.M)
    else:
        shape = (modes.omega / modes.omega[-1]).astype(complex)
        alpha = CoherentSpec(np.stack([a * shape, a * shape], axis=1))
    lam = alpha.mean_number(modes)
    m_max = p["m_max"]
    limit = comb.poisson_pmf(lam, m_max)
    limit_tail = max(0.0, 1.0 - math.fsum(limit))
    outputs, rows = {}, []
    for N in p["N_list"]:
        dist = comb.excitation_distribution(modes, alpha, N, m_max)
        outputs[f"distribution_N{N}.csv"] = comb.distribution_csv(dist)
        tv = comb.total_variation(dist.probabilities, limit, dist.tail_mass, limit_tail)
        try:
            bc = fmt(comb.boundary_conditional(modes, alpha, N, 2))
        except ZeroDivisionError:
            bc = ""
        rows.append([N, fmt(tv), fmt(dist.mean()), fmt(dist.tail_mass), bc])
    outputs["summary.csv"] = render(["N", "tv_to_poisson", "mean", "tail_mass", "boundary_conditional_m2"], rows)
    outputs["poisson_limit.csv"] = render(["m", "P"], [[m, fmt(v)] for m, v in enumerate(limit)])
    return outputs, {"poisson_mean": lam, "modes": modes.M}


def run_amplitude(p, seed):
    model, _ = _window(p)
    if p["method"] == "volterra":
        rep = amp.richardson(model, p["t_max"], p["h"])
        series = rep.extrapolated
        ref = amp.canonical_amplitude(model, series.t)
        diag = {"richardson_order": rep.order, "refinement_ratio": rep.ratio,
                "error_estimate": series.error_estimate, "sup_distance_to_resolvent": series.sup_distance(ref)}
    else:
        t, _ = amp._grid(p["t_max"], p["h"])
        series = amp.canonical_amplitude(model, t)
        diag = {"method": series.method}
    diag["max_abs"] = float(np.max(np.abs(series.values)))
    return {"amplitude.csv": series.to_csv()}, diag


def run_thermo_limit(p, seed):
    model, modes = _window(p)
    t = _time_grid(p["t_max"], p["n_t"])
    canonical = amp.canonical_amplitude(model, t)
    outputs = {"canonical.csv": canonical.to_csv()}
    rows = []
    for N in p["N_list"]:
        if p["method"] == "exact":
            s = amp.noncanonical_amplitude_exact(model, N, t)
            se = 0.0
        else:
            if p["samples"] > SAMPLE_CAP:
                raise ResourceCapError(f"{p['samples']} samples exceed the cap {SAMPLE_CAP}")
            s = amp.noncanonical_amplitude_mc(model, N, p["samples"], seed, t, chunk=p["chunk"])
            se = float(s.stderr.max())
        outputs[f"noncanonical_N{N}.csv"] = s.to_csv()
        d = float(np.max(np.abs(s.values - canonical.values)))
        rows.append([N, fmt(d), fmt(se), fmt(d - 2 * se)])
    outputs["summary.csv"] = render(["N", "sup_discrepancy", "max_stderr", "discrepancy_minus_2se"], rows)
    return outputs, {"modes": modes.M, "threads": amp._worker_count(None)}


def run_propagator(p, seed):
    rp = pg.RadialProfile(profile_from_dict(p["profile"]))
    if p["n_t"] > GRID_CAP:
        raise ResourceCapError(f"time grid of {p['n_t']} points exceeds {GRID_CAP}")
    t = np.linspace(p["t_min"], p["t_max"], p["n_t"])
    res = pg.d_z_quad(rp, t, p["r"])
    diag = {"quadrature_error": res.error, "panels": res.panels, "k_max": rp.k_max,
            "coincidence_value": pg.coincidence_value(rp)}
    if p["r"] > 0:
        diag["equal_time_value"] = pg.equal_time_commutator_check(rp, p["r"])
    if p["lightcone"] and p["r"] > 0:
        lc = pg.lightcone_deviation(rp, p["r"])
        diag["lightcone"] = {"peak_time": lc.peak_time, "width": lc.width, "peak_value": lc.peak_value,
                             "ambiguous": lc.ambiguous, "secondary_ratio": lc.secondary_ratio}
    return {"dz.csv": pg.d_z_csv(t, p["r"], res.value)}, diag


def run_radiation(p, seed):
    if not p["eps_max"] > p["eps_min"]:
        raise ConfigError("parameters.eps_max: must exceed eps_min")
    rp = pg.RadialProfile(profile_from_dict(p["profile"]))
    cur = CurrentSpec.soft(p["g"])
    eps = np.logspace(math.log10(p["eps_min"]), math.log10(p["eps_max"]), p["n_eps"])
    sweep = pg.ir_sweep(rp, cur, eps)
    diag = {"log_fit": {"slope": sweep.slope, "intercept": sweep.intercept, "r_squared": sweep.r_squared}}
    if pg._diverges(rp, cur):
        diag["photon_number"] = "divergent"
    else:
        diag["photon_number"] = pg.radiated_photon_number(rp, cur, 0.0)
    energy, momentum = pg.radiated_four_momentum(rp, cur)
    diag["energy"], diag["momentum"] = energy, momentum
    return {"ir_sweep.csv": pg.ir_sweep_csv(sweep)}, diag


def run_renorm_sweep(p, seed):
    t = _time_grid(p["t_max"], p["n_t"])
    rep = amp.renormalization_sweep(p["omega0"], p["lam1"], p["width"], p["spacing"], p["coupling_times_plateau"], t,
                                    p["doublings"])
    header = ["t"]
    for i in range(len(rep.widths)):
        header += [f"re_{i}", f"im_{i}"]
    rows = []
    for j, tj in enumerate(t):
        row = [fmt(tj)]
        for a in rep.amplitudes:
            row += [fmt(a.values[j].real), fmt(a.values[j].imag)]
        rows.append(row)
    steps = render(["step", "width", "plateau", "C", "drift"],
                   [[i, fmt(w), fmt(z), fmt(c), fmt(rep.drifts[i - 1]) if i else ""]
                    for i, (w, z, c) in enumerate(zip(rep.widths, rep.plateau, rep.couplings))])
    return {"amplitudes.csv": render(header, rows), "steps.csv": steps}, {
        "drifts": rep.drifts, "decreasing": rep.decreasing}


RUNNERS = {
    "combinatorics": run_combinatorics,
    "excitations": run_excitations,
    "amplitude": run_amplitude,
    "thermo-limit": run_thermo_limit,
    "propagator": run_propagator,
    "radiation": run_radiation,
    "renorm-sweep": run_renorm_sweep,
}


# ---------------------------------------------------------------------------
# pre-flight report


def preflight(doc: dict) -> tuple[list[str], list[str]]:
    """Derived sizes for a validated config; returns (report lines, warnings)."""
    p, cmd = doc["parameters"], doc["command"]
    lines, warns = [], []
    if cmd == "combinatorics":
        lines.append(f"ordered tuples N**m = {p['N'] ** p['m']}")
        if p["brute_force"] and p["N"] ** p["m"] > BRUTE_FORCE_CAP:
            warns.append(f"brute force exceeds {BRUTE_FORCE_CAP} tuples; reduce N or m, or disable brute_force")
    elif cmd == "excitations":
        lines.append(f"modes {p['M']}, N values {p['N_list']}, polynomial degree {p['m_max']}")
    elif cmd in ("amplitude", "thermo-limit"):
        lines.append(f"modes {p['modes']}")
        if cmd == "amplitude":
            steps = round(p["t_max"] / p["h"])
            lines.append(f"Volterra steps {steps} (refined to {4 * steps}), kernel memory {16 * (4 * steps + 1)} bytes")
        else:
            worst = p["modes"] ** max(p["N_list"])
            lines.append(f"largest tuple space M**N = {worst}")
            lines.append(f"bordered matrices per N: {p['samples']} of size up to {max(p['N_list']) + 1}")
            if p["method"] == "exact" and worst > 10**6:
                small = [N for N in p["N_list"] if p["modes"] ** N <= 10**6]
                warns.append(f"exact sum over {worst} tuples exceeds 10**6; use method monte-carlo "
                             f"or restrict N_list to {small}")
    elif cmd == "propagator":
        rp = pg.RadialProfile(profile_from_dict(p["profile"]))
        rate = max(abs(p["t_min"]), abs(p["t_max"])) + p["r"]
        panels = max(1, math.ceil(rp.k_max * rate / (1.5 * math.pi)))
        lines.append(f"k_max {rp.k_max:.6g}, about {panels} panels x 20 nodes per time point")
    elif cmd == "radiation":
        lines.append(f"{p['n_eps']} cutoffs in [{p['eps_min']:g}, {p['eps_max']:g}]")
    elif cmd == "renorm-sweep":
        counts = [max(1, round(p["width"] * 2**i / p["spacing"])) for i in range(p["doublings"] + 1)]
        lines.append(f"mode counts {counts}")
    return lines, warns


# ---------------------------------------------------------------------------
# artifacts


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _gnuplot(command: str, names: list[str]) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead", f"set title '{command}'"]
    plots = [f"'{n}' using 1:2 with lines" for n in names]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def execute(doc: dict, plot: bool = False) -> dict:
    """Run a validated configuration, write its artifacts and return the manifest."""
    t0 = time.perf_counter()
    outputs, diag = RUNNERS[doc["command"]](doc["parameters"], doc.get("seed", 0))
    out = Path(doc["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name, text in outputs.items():
        (out / name).write_bytes(text.encode())
    if plot:
        script = _gnuplot(doc["command"], sorted(outputs))
        (out / "plot.gp").write_bytes(script.encode())
    manifest = {
        "tool": "noncanon",
        "version": VERSION,
        "backend": kernels.BACKEND,
        "config": doc,
        "wall_time": time.perf_counter() - t0,
        "outputs": {name: _sha256(text) for name, text in sorted(outputs.items())},
        "diagnostics": diag,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    # no -h shortcut: ``--h`` is the Volterra step override
    ap = argparse.ArgumentParser(prog="noncanon", description="Non-canonical quantization numerical laboratory.",
                                 add_help=False, allow_abbrev=False)
    ap.add_argument("--help", action="help", help="show this message and exit")
    ap.add_argument("command", choices=COMMANDS + ("validate",))
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--plot", action="store_true", help="also write a gnuplot script")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = _parser()
    args, rest = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = _parse_overrides(rest)
        if args.command == "validate":
            if args.config is None:
                raise ConfigError("validate needs --config")
            try:
                raw = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError):
                raw = {}  # load_config reports the precise diagnostic
            command = raw.get("command", "combinatorics") if isinstance(raw, dict) else "combinatorics"
            if isinstance(raw, dict) and "command" not in raw:
                raise ConfigError("<root>: missing required key 'command'")
            if command not in COMMANDS:
                raise ConfigError(f"command: unknown command {command!r}")
            doc = load_config(command, args.config, overrides, args.seed, args.out)
            lines, warns = preflight(doc)
            print("OK")
            for line in lines:
                print("  " + line)
            for w in warns:
                print("WARNING: " + w)
            return 0
        doc = load_config(args.command, args.config, overrides, args.seed, args.out)
        manifest = execute(doc, args.plot)
    except (ConfigError, jsonschema.SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ResourceCapError, DimensionCapError, amp.CombinatorialCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 3
    except (amp.ConvergenceError, pg.QuadratureError, pg.DivergenceError, pg.FlatLandscapeError, TruncationError,
            ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(manifest['outputs'])} file(s) to {doc['output_dir']}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
