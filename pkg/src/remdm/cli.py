"""Command-line front end: ``remdm verify | sample | sweep | nelbo``.

Parameters come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines (``#`` starts a comment), then command-line flags. Keys in
the config file use the flag names with underscores (``top_p=0.9``).

Exit status: 0 on success, 1 when a verification check fails, 2 on usage or
I/O errors.
"""

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis
from .denoiser import ExactBayesDenoiser, figure1_toy, load_joint, random_joint
from .exceptions import RemdmError
from .rng import derive_seed
from .sampler import SamplerConfig, run_sampler
from .schedules import GATE_MODES, LOG_LINEAR, POLICY_KINDS, GateSpec, RemaskPolicy

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DEFAULTS = {
    "seed": 0,
    "out": None,
    "T": 8,
    "policy": "zero",
    "eta": 1.0,
    "dfm_A": 10.0,
    "confidence": False,
    "top_p": 1.0,
    "temperature": 1.0,
    "gate": "always",
    "t_switch": 1.0,
    "t_on": 0.55,
    "n_phase1": 1,
    "n_phase2": 1,
    "alpha_loop": None,
    "joint": "toy",
    "n": 1000,
    "workers": 1,
    "batch_size": 20000,
    "tolerance": analysis.DEFAULT_TOLERANCE,
    "metrics_out": None,
    "Ts": "1,2,4,8",
    "policies": "zero",
}

_TYPES = {
    "seed": int, "T": int, "eta": float, "dfm_A": float, "top_p": float,
    "temperature": float, "t_switch": float, "t_on": float, "n_phase1": int,
    "n_phase2": int, "alpha_loop": float, "n": int, "workers": int,
    "batch_size": int, "tolerance": float,
}


class UsageError(RemdmError):
    pass


def fmt(value):
    """Stable CSV rendering: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text, newline="")
        except OSError as exc:
            raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def _to_bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config(path):
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    out = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    if value is None or key not in _TYPES and key != "confidence":
        return value
    if key == "confidence":
        return value if isinstance(value, bool) else _to_bool(value)
    try:
        return _TYPES[key](value)
    except (TypeError, ValueError):
        raise UsageError(f"bad value for {key}: {value!r}") from None


def resolve(args):
    """Merge defaults, config file and flags (flags win)."""
    params = dict(DEFAULTS)
    if args.config:
        params.update(read_config(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            params[key] = flag
    return {k: _coerce(k, v) for k, v in params.items()}


def parse_joint(spec):
    """``toy``, ``random:L=4,V=6,N=10,seed=0`` or a path to a joint file."""
    if spec == "toy":
        return figure1_toy()
    if spec.startswith("random:"):
        try:
            kv = dict(part.split("=", 1) for part in spec[7:].split(",") if part)
            return random_joint(int(kv["L"]), int(kv["V"]), int(kv["N"]), seed=int(kv.get("seed", 0)))
        except (KeyError, ValueError):
            raise UsageError(f"bad random joint spec {spec!r}; use random:L=..,V=..,N=..,seed=..") from None
    return load_joint(spec)


def build_policy(p, kind=None, eta=None):
    kind = p["policy"] if kind is None else kind
    eta = p["eta"] if eta is None else eta
    if p["gate"] == "always":
        gate = GateSpec()
    else:
        gate = GateSpec(
            p["gate"], t_switch=p["t_switch"], t_on=p["t_on"], n_phase1=p["n_phase1"],
            n_phase2=p["n_phase2"], alpha_loop=p["alpha_loop"],
        )
    return RemaskPolicy(
        kind,
        eta_cap=eta if kind == "cap" else 1.0,
        eta_rescale=eta if kind == "rescale" else 1.0,
        dfm_A=p["dfm_A"],
        use_confidence=p["confidence"],
        gate=gate,
    )


def build_config(p, T=None, policy=None, seed=None):
    return SamplerConfig(
        T=p["T"] if T is None else T,
        policy=build_policy(p) if policy is None else policy,
        schedule=LOG_LINEAR,
        top_p=p["top_p"],
        temperature=p["temperature"],
        seed=p["seed"] if seed is None else seed,
        n_samples=p["n"],
    )


def _sample_nll(tokens, joint):
    ref = joint.as_dict()
    out = []
    for row in tokens.tolist():
        prob = ref.get(tuple(row))
        out.append(-math.log(prob) / joint.L if prob else math.inf)
    return out


METRIC_COLUMNS = [
    "n_samples", "tv", "tv_stderr", "token_entropy", "sample_entropy",
    "oracle_nll", "support_violations", "inconsistency_rate",
]


def cmd_verify(p):
    joint = parse_joint(p["joint"])
    reports = analysis.run_verification_suite(tolerance=p["tolerance"])
    T = p["T"]
    a = analysis.nelbo(joint, LOG_LINEAR, None, T)
    b = analysis.mdlm_nelbo(joint, LOG_LINEAR, T)
    reports.append(analysis.VerificationReport(
        "nelbo_mdlm_reduction", f"joint {p['joint']} T={T}",
        abs(a.total - b.total), p["tolerance"], n_cells=T,
    ))
    rows = [
        (r.check, r.grid, r.deviation, r.tolerance, r.passed, r.n_cells, r.n_skipped, r.n_clamped)
        for r in reports
    ]
    write_csv(p["out"], ["check", "grid", "deviation", "tolerance", "pass",
                         "n_cells", "n_skipped", "n_clamped"], rows)
    failed = [r for r in reports if not r.passed]
    stream = sys.stdout if p["out"] not in (None, "-") else sys.stderr
    for r in reports:
        print(r.summary(), file=stream)
    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed", file=stream)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_sample(p):
    joint = parse_joint(p["joint"])
    config = build_config(p)
    result = run_sampler(
        config, ExactBayesDenoiser(joint, fallback="nearest"),
        batch_size=p["batch_size"], n_workers=p["workers"],
    )
    nll = _sample_nll(result.tokens, joint)
    header = ["sample_id"] + [f"tok_{k + 1}" for k in range(joint.L)] + ["oracle_nll"]
    rows = (
        [k] + [joint.vocab[t] for t in row] + [v]
        for k, (row, v) in enumerate(zip(result.tokens.tolist(), nll))
    )
    write_csv(p["out"], header, rows)
    metrics = analysis.compute_metrics(result.tokens, joint).as_row()
    metrics_out = p["metrics_out"]
    if metrics_out is None and p["out"] not in (None, "-"):
        out = Path(p["out"])
        metrics_out = str(out.with_name(out.stem + ".metrics.csv"))
    metric_header = ["T", "policy", "eta", "seed"] + METRIC_COLUMNS + ["n_clamped_steps"]
    metric_row = [p["T"], p["policy"], p["eta"], p["seed"]]
    metric_row += [metrics[c] for c in METRIC_COLUMNS] + [result.n_clamped_steps]
    write_csv(metrics_out, metric_header, [metric_row])
    return EXIT_OK


def _parse_list(text, cast, name):
    try:
        items = [cast(v.strip()) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad {name} list {text!r}") from None
    if not items:
        raise UsageError(f"{name} grid is empty")
    return items


def _parse_policy(item, default_eta):
    kind, _, eta = item.partition(":")
    if kind not in POLICY_KINDS:
        raise UsageError(f"unknown policy {kind!r}")
    try:
        return kind, float(eta) if eta else default_eta
    except ValueError:
        raise UsageError(f"bad eta in {item!r}") from None


def cmd_sweep(p):
    joint = parse_joint(p["joint"])
    Ts = _parse_list(p["Ts"], int, "T")
    policies = [_parse_policy(item, p["eta"]) for item in _parse_list(p["policies"], str, "policy")]
    denoiser = ExactBayesDenoiser(joint, fallback="nearest")
    cells = [(T, kind, eta) for T in Ts for kind, eta in policies]
    configs = [
        build_config(p, T=T, policy=build_policy(p, kind, eta),
                     seed=derive_seed(p["seed"], T, kind, eta))
        for T, kind, eta in cells
    ]

    def run(config):
        result = run_sampler(config, denoiser, batch_size=p["batch_size"])
        return result, analysis.compute_metrics(result.tokens, joint).as_row()

    if p["workers"] > 1:
        with ThreadPoolExecutor(max_workers=p["workers"]) as pool:
            outputs = list(pool.map(run, configs))  # map keeps grid order
    else:
        outputs = [run(c) for c in configs]
    header = ["T", "policy", "eta", "seed"] + METRIC_COLUMNS + ["n_clamped_steps", "clamped"]
    rows = []
    for (T, kind, eta), config, (result, m) in zip(cells, configs, outputs):
        rows.append([T, kind, eta, config.seed] + [m[c] for c in METRIC_COLUMNS]
                    + [result.n_clamped_steps, result.n_clamped_steps > 0])
    write_csv(p["out"], header, rows)
    return EXIT_OK


def cmd_nelbo(p):
    joint = parse_joint(p["joint"])
    policy = build_policy(p)
    res = analysis.nelbo(joint, LOG_LINEAR, policy, p["T"])
    rows = [("reconstruction", "", res.reconstruction), ("diffusion", "", res.diffusion),
            ("total", "", res.total)]
    rows += [("step", i + 1, v) for i, v in enumerate(res.per_step)]
    write_csv(p["out"], ["term", "step", "value"], rows)
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "sample": cmd_sample, "sweep": cmd_sweep, "nelbo": cmd_nelbo}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value parameter file")
    common.add_argument("--seed", help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output CSV path (stdout when omitted)")
    common.add_argument("--T", help="number of reverse steps")
    common.add_argument("--policy", choices=POLICY_KINDS)
    common.add_argument("--eta", help="eta for cap / rescale policies")
    common.add_argument("--dfm-A", dest="dfm_A")
    common.add_argument("--confidence", action="store_const", const=True,
                        help="confidence-weighted remasking")
    common.add_argument("--top-p", dest="top_p")
    common.add_argument("--temperature")
    common.add_argument("--gate", choices=GATE_MODES)
    common.add_argument("--t-switch", dest="t_switch")
    common.add_argument("--t-on", dest="t_on")
    common.add_argument("--n-phase1", dest="n_phase1")
    common.add_argument("--n-phase2", dest="n_phase2")
    common.add_argument("--alpha-loop", dest="alpha_loop")
    common.add_argument("--joint", help="toy, random:L=..,V=..,N=..,seed=.. or a joint file")
    common.add_argument("--n", help="number of samples")
    common.add_argument("--workers")
    common.add_argument("--batch-size", dest="batch_size")
    common.add_argument("--tolerance")
    common.add_argument("--metrics-out", dest="metrics_out")
    common.add_argument("--Ts", help="comma-separated T grid for sweep")
    common.add_argument("--policies", help="comma-separated policy[:eta] grid for sweep")

    parser = argparse.ArgumentParser(prog="remdm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="run the exact verification suite")
    sub.add_parser("sample", parents=[common], help="draw samples and score them")
    sub.add_parser("sweep", parents=[common], help="metrics over a (T, policy, eta) grid")
    sub.add_parser("nelbo", parents=[common], help="exact NELBO with per-step terms")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params = resolve(args)
        return COMMANDS[args.command](params)
    except (RemdmError, ValueError) as exc:
        print(f"remdm {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
