"""Command-line front end: build machines, run orbits and dynamics, decide.

Verbs: build-machine, orbit, evolve, timeavg, gap, decide, sample-good,
phase-decode.  Artifacts are CSV or JSON; every artifact embeds the resolved
configuration and the library version, and identical seeds give byte-equal
output.  Exit codes: 0 verdict produced, 2 input error, 3 resource guard,
4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

import numpy as np

from . import __version__
from .dynamics import (
    orbit_longterm_average,
    orbit_site_average,
    run_orbit_cached,
    trace_distance,
)
from .encoding import (
    EnsembleParams,
    NoValidCodeword,
    OraclePromiseViolated,
    PromiseViolated,
    anchored_configuration,
    build_initial_ensemble,
    encode_input,
    estimate_bad_rate_anchored,
    estimate_bad_rate_iid,
    good_rate_bounds,
    phase_decode,
    scattered_m_sites,
)
from .hamiltonian import (
    DimensionGuard,
    TruncatedOrbit,
    compile_machine,
    energy_gap_bound,
    min_distinct_gap,
    orbit_spectrum,
)
from .machine import (
    MalformedConfiguration,
    NotReversible,
    a_cell,
    cell_to_tag,
    cell_track2,
    load_spec,
    orbit_to_jsonl,
    run_orbit,
    save_spec,
)
from .staged import VARIANTS, build_staged_machine
from .verifier import (
    DecisionInstance,
    GapViolation,
    InvalidThresholds,
    decide_finite,
    fixture_gap_floor,
    semi_decide,
)


class InputError(ValueError):
    pass


def _fraction(text: str) -> Fraction:
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(text)


def _machine_from_args(args):
    if getattr(args, "machine", None):
        try:
            return load_spec(args.machine)
        except FileNotFoundError:
            raise InputError(f"machine spec not found: {args.machine}")
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise InputError(f"malformed machine spec: {exc}")
    return build_staged_machine(
        args.inner, args.variant, include_decode=not args.no_decode
    )


def _config_from_args(spec, args):
    if args.alpha and args.m_count is None:
        m_count = round(float(_fraction(args.alpha)) * args.L)
    else:
        m_count = args.m_count or 0
    sites = scattered_m_sites(args.L, m_count, seed=args.seed) if m_count else {}
    return anchored_configuration(spec, args.L, sites, boundary=args.boundary)


def _header_lines(args, extra=None):
    skip = ("func", "out", "stats_out")
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    if extra:
        cfg.update(extra)
    return [
        f"# version: hamca {__version__}",
        f"# config: {json.dumps(cfg, sort_keys=True, default=str)}",
    ]


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------


def cmd_build_machine(args):
    spec = build_staged_machine(
        args.inner, args.variant, include_decode=not args.no_decode
    )
    save_spec(spec, args.out)
    print(f"wrote {args.out}: {len(spec.rules)} rules, {len(spec.control.states)} states")
    return 0


def cmd_orbit(args):
    spec = _machine_from_args(args)
    config = _config_from_args(spec, args)
    orbit = run_orbit(spec, config, args.max_steps)
    _write(args.out, orbit_to_jsonl(orbit))
    lines = _header_lines(args, {"terminal": orbit.terminal[0], "J": orbit.length})
    lines.append("j,n_a1,n_a2,n_a3")
    series = {
        sym: [
            sum(1 for x in c.cells if not x[0] == "Q" and cell_track2(x) == sym)
            for c in orbit.states
        ]
        for sym in ("a1", "a2", "a3")
    }
    for j in range(orbit.length):
        lines.append(
            f"{j + 1},{series['a1'][j]},{series['a2'][j]},{series['a3'][j]}"
        )
    _write(args.stats_out, "\n".join(lines) + "\n")
    print(f"terminal={orbit.terminal[0]} J={orbit.length}")
    return 0


def cmd_gap(args):
    spec = _machine_from_args(args)
    config = _config_from_args(spec, args)
    orbit = run_orbit(spec, config, args.max_steps)
    if orbit.kind == "truncated":
        raise TruncatedOrbit("orbit did not close within the step budget")
    spectrum = orbit_spectrum(orbit)
    bound = energy_gap_bound(orbit)
    result = {
        "version": __version__,
        "J": orbit.length,
        "terminal": orbit.terminal[0],
        "gap_bound": [bound.numerator, bound.denominator],
        "min_distinct_gap": min_distinct_gap(spectrum),
        "satisfied": bool(min_distinct_gap(spectrum) >= float(bound) - 1e-12),
    }
    _write(args.out, json.dumps(result, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_evolve(args):
    spec = _machine_from_args(args)
    h = compile_machine(spec, args.boundary)
    config = _config_from_args(spec, args)
    orbit = run_orbit_cached(config, h, args.max_steps)
    if orbit.kind == "truncated":
        raise TruncatedOrbit("orbit did not close within the step budget")
    d = h.site_dim
    i1 = h.value_index(a_cell("a1"))
    i2 = h.value_index(a_cell("a2"))
    e1 = np.zeros((d, d), dtype=complex)
    e1[i1, i1] = 1.0
    mix = np.zeros((d, d), dtype=complex)
    mix[i1, i1] = 0.5
    mix[i2, i2] = 0.5
    ts = np.linspace(0.0, args.t_max, args.t_steps)
    lines = _header_lines(args, {"J": orbit.length})
    lines.append(
        "# trace distances use the unhalved convention (orthogonal pure states at 2)"
    )
    lines.append("t,p_a1,p_a2,re_rho_a1_a2,im_rho_a1_a2,dist_to_a1,dist_to_half_mix")
    for t in ts:
        rho = orbit_site_average(orbit, h, float(t))
        lines.append(
            ",".join(
                [
                    f"{t:.12g}",
                    f"{rho[i1, i1].real:.12g}",
                    f"{rho[i2, i2].real:.12g}",
                    f"{rho[i1, i2].real:.12g}",
                    f"{rho[i1, i2].imag:.12g}",
                    f"{trace_distance(rho, e1):.12g}",
                    f"{trace_distance(rho, mix):.12g}",
                ]
            )
        )
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_timeavg(args):
    spec = _machine_from_args(args)
    h = compile_machine(spec, args.boundary)
    config = _config_from_args(spec, args)
    orbit = run_orbit_cached(config, h, args.max_steps)
    if orbit.kind == "truncated":
        raise TruncatedOrbit("orbit did not close within the step budget")
    rho = orbit_longterm_average(orbit, h)
    d = h.site_dim
    i1 = h.value_index(a_cell("a1"))
    e1 = np.zeros((d, d), dtype=complex)
    e1[i1, i1] = 1.0
    payload = {
        "version": __version__,
        "J": orbit.length,
        "terminal": orbit.terminal[0],
        "basis": [cell_to_tag(v) for v in h.site_values],
        "state": [[[v.real, v.imag] for v in row] for row in rho],
        "dist_to_a1": trace_distance(rho, e1),
    }
    _write(args.out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return 0


def _instance_from_file(path, t0_override=None):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise InputError(f"instance file not found: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed instance JSON: {exc}")
    try:
        if "machine_ref" in data:
            try:
                spec = load_spec(data["machine_ref"])
            except FileNotFoundError:
                raise InputError(f"machine spec not found: {data['machine_ref']}")
        else:
            spec = build_staged_machine(
                data["inner"], data["variant"], include_decode=data.get("decode", True)
            )
        alpha = Fraction(*data.get("alpha", [0, 1]))
        enc = encode_input(data.get("v", "1"), alpha)
        params = EnsembleParams(
            mode=data.get("mode", "anchored"),
            L=data["L"],
            alpha=alpha,
            l=data.get("l", 0),
            boundary=data.get("boundary", "periodic"),
        )
        ensemble = build_initial_ensemble(spec, params, enc)
        inst = DecisionInstance(
            machine=spec,
            ensemble=ensemble,
            eta=data["eta"],
            eps1=data["eps1"],
            gamma=data.get("gamma", 1),
            t0_override=t0_override if t0_override is not None else data.get("t0_override"),
            label=data.get("label", ""),
        )
        if data.get("gap_floor_from_fixture"):
            inst.gap_floor = fixture_gap_floor(spec, ensemble)
    except KeyError as exc:
        raise InputError(f"instance file missing field {exc}")
    return inst, data


def cmd_decide(args):
    inst, data = _instance_from_file(args.instance, t0_override=args.t0_override)
    violations = inst.ensemble.metadata.get("violations", [])
    if violations and not args.override_params:
        print(
            "note: parameter thresholds not met (pass --override-params to "
            f"silence): {'; '.join(violations)}",
            file=sys.stderr,
        )
    if data.get("semi"):
        budget = data.get("budget", 64)
        verdict = semi_decide(lambda m: inst if m == 1 else None, budget)
    else:
        verdict = decide_finite(inst)
    payload = verdict.to_json()
    payload["version"] = __version__
    payload["instance"] = {k: v for k, v in sorted(data.items())}
    _write(args.out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_sample_good(args):
    if args.mode == "anchored":
        rate = estimate_bad_rate_anchored(
            args.n, _fraction(args.alpha), args.L, args.samples, args.seed
        )
        bound = good_rate_bounds(
            EnsembleParams("anchored", args.L, _fraction(args.alpha)), args.n
        )
    else:
        rate = estimate_bad_rate_iid(args.n, args.l, args.L, args.samples, args.seed)
        bound = good_rate_bounds(
            EnsembleParams("iid", args.L, _fraction(args.alpha), l=args.l), args.n
        )
    payload = {
        "version": __version__,
        "mode": args.mode,
        "bad_rate": rate,
        "bound": float(bound),
        "within_bound": bool(rate <= float(bound)),
        "samples": args.samples,
        "seed": args.seed,
    }
    _write(args.out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_phase_decode(args):
    if args.v:
        enc = encode_input(args.v)
        beta = enc.beta
    else:
        beta = _fraction(args.beta)
    n, v = phase_decode(beta, args.n_prime)
    payload = {
        "version": __version__,
        "length": n,
        "bits": v,
        "beta": [beta.numerator, beta.denominator],
    }
    _write(args.out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_machine_opts(p):
    p.add_argument("--machine", help="machine spec JSON file")
    p.add_argument("--inner", default="halt_now", help="inner fixture name")
    p.add_argument("--variant", default="one-way-amp", choices=VARIANTS)
    p.add_argument("--no-decode", action="store_true", help="skip the decode stage")


def _add_config_opts(p):
    p.add_argument("--L", type=int, default=8, help="tape length (cells)")
    p.add_argument("--alpha", default=None, help="simulation-cell rate (fraction)")
    p.add_argument("--m-count", type=int, default=None, help="simulation cells, explicit count")
    p.add_argument("--boundary", default="periodic", choices=("periodic", "open"))
    p.add_argument("--max-steps", type=int, default=200000)


def build_parser():
    ap = argparse.ArgumentParser(prog="hamca", description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=1,
                    help="parallelism cap; results are identical for any value")
    ap.add_argument("--format", default="json", choices=("json", "csv"))
    sub = ap.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("build-machine", help="emit a machine spec JSON")
    _add_machine_opts(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_machine)

    p = sub.add_parser("orbit", help="run an orbit; emit JSONL and count CSV")
    _add_machine_opts(p)
    _add_config_opts(p)
    p.add_argument("--out", default="-")
    p.add_argument("--stats-out", default="orbit_stats.csv")
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("gap", help="orbit spectrum gap versus the certified bound")
    _add_machine_opts(p)
    _add_config_opts(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("evolve", help="time series of the averaged site state")
    _add_machine_opts(p)
    _add_config_opts(p)
    p.add_argument("--t-max", type=float, default=20.0)
    p.add_argument("--t-steps", type=int, default=41)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("timeavg", help="long-term averaged site state")
    _add_machine_opts(p)
    _add_config_opts(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_timeavg)

    p = sub.add_parser("decide", help="run the decision procedure on an instance file")
    p.add_argument("instance")
    p.add_argument("--t0-override", type=float, default=None,
                   help="replace the instance's cutoff time")
    p.add_argument("--override-params", action="store_true",
                   help="acknowledge desk-scale parameter-threshold violations")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("sample-good", help="Monte Carlo bad-rate versus the bound")
    p.add_argument("--mode", default="anchored", choices=("anchored", "iid"))
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", default="1/8")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--L", type=int, default=2**18)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sample_good)

    p = sub.add_parser("phase-decode", help="recover bits from the rotation angle")
    p.add_argument("--v", help="bit string (for round-trip use)")
    p.add_argument("--beta", help="angle as a fraction p/q")
    p.add_argument("--n-prime", type=int, default=12)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_phase_decode)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, PromiseViolated, NoValidCodeword, OraclePromiseViolated,
            NotReversible, MalformedConfiguration, InvalidThresholds,
            GapViolation, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DimensionGuard, TruncatedOrbit) as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return 3
    except AssertionError as exc:  # pragma: no cover
        print(f"internal invariant failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
