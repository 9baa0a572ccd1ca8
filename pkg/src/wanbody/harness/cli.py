"""``wanbody`` command line: predict, sweep, simulate, validate, netbench, relay."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import threading
import time
from dataclasses import replace

from ..perfmodel.model import bandwidth_sweep, efficiency, predict_step, speedup
from ..perfmodel.report import prediction_row, write_predictions
from .config import apply_overrides, channel_from, experiment_from, load_config, run_spec_from

log = logging.getLogger("wanbody")

RUN_FLAGS = {
    "preset": str,
    "sites": str,
    "n_particles": float,
    "n_mesh": float,
    "theta": float,
    "p_total": int,
    "r_samp": float,
    "migration_bytes": float,
    "pm_site": int,
}
SIM_FLAGS = {
    "steps": int,
    "backend": str,
    "dt": float,
    "dt_max": float,
    "softening": float,
    "seed": int,
    "ic": str,
    "snapshot_every": int,
    "snapshot_dir": str,
    "theta_schedule": str,
    "move_limit": float,
}
NET_FLAGS = {"lambda_lan": float, "lambda_wan": float, "sigma_lan": float, "sigma_wan": float}


def _add(parser, flags):
    for name, typ in flags.items():
        parser.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)


def _config(args, sim: bool = False):
    cp = load_config(args.config)
    apply_overrides(cp, "run", {k: getattr(args, k) for k in RUN_FLAGS})
    apply_overrides(cp, "network", {k: getattr(args, k) for k in NET_FLAGS})
    if sim:
        apply_overrides(cp, "run", {k: getattr(args, k) for k in SIM_FLAGS})
    return cp


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


# ------------------------------------------------------------------ commands


def cmd_predict(args) -> int:
    spec = run_spec_from(_config(args))
    fh = _open_out(args.output)
    write_predictions([prediction_row(spec)], fh)
    _close_out(fh)
    return 0


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def cmd_sweep(args) -> int:
    spec = run_spec_from(_config(args))
    fh = _open_out(args.output)
    w = csv.writer(fh, lineterminator="\n")
    if args.vary == "s":
        w.writerow(["s", "t_exec", "S", "E"])
        for s in (int(v) for v in _floats(args.values)):
            # S: p processes per site; E: fixed total p
            t = predict_step(spec.with_sites(s, spec.p_total * s)).t_exec
            w.writerow([s, f"{t:.6g}", f"{speedup(spec, s):.6g}", f"{efficiency(spec, s):.6g}"])
    else:
        s = args.s or spec.s
        w.writerow(["sigma_wan", "E"])
        for sigma, e in bandwidth_sweep(spec, s, _floats(args.values)):
            w.writerow([f"{sigma:.6g}", f"{e:.6g}"])
    _close_out(fh)
    return 0


def cmd_simulate(args) -> int:
    from .analysis import compare_with_model, write_comparison_csv, write_records_csv
    from .experiment import run_experiment

    config = experiment_from(_config(args, sim=True))
    t0 = time.perf_counter()
    result = run_experiment(config)
    log.info("simulated %d steps on %d site(s) in %.1f s", config.steps, config.spec.s, time.perf_counter() - t0)
    fh = _open_out(args.output)
    write_records_csv(fh, result.records)
    _close_out(fh)
    if args.decomposition:
        from ..decomposition import write_decomposition_csv

        with open(args.decomposition, "w", newline="") as dfh:
            write_decomposition_csv(dfh, result.history)
    if args.compare:
        rows = compare_with_model(result.records, config.spec)
        with open(args.compare, "w", newline="") as cfh:
            write_comparison_csv(cfh, rows)
    return 0


def cmd_validate(args) -> int:
    from .validate import SUITES, run_validation

    suites = SUITES if args.suite == "all" else [args.suite]
    checks = run_validation(suites)
    for c in checks:
        print(f"{'PASS' if c.ok else 'FAIL'}  {c.suite:<9} {c.name}  ({c.detail})")
    return 0 if all(c.ok for c in checks) else 1


def cmd_netbench(args) -> int:
    from ..transport import ChannelConfig, connect_channel, netbench, netbench_responder, sim_pair, tcp_pair
    from ..transport import TcpListener, write_netbench_csv

    cp = _config(args)
    sizes = [int(x) for x in _floats(args.sizes)]
    if args.backend == "simulated":
        net = run_spec_from(cp).network
        cfg = ChannelConfig(
            latency=args.latency if args.latency is not None else net.lambda_wan,
            bandwidth=args.bandwidth if args.bandwidth is not None else net.sigma_wan,
        )
        a, b = sim_pair(cfg)
    else:
        cfg = channel_from(cp, "tcp")
        if args.streams:
            cfg = cfg.with_(streams=args.streams)
        if args.serve:
            host, port = args.serve.rsplit(":", 1)
            listener = TcpListener(host, int(port), cfg)
            log.info("netbench responder on %s:%d", *listener.address)
            ch = listener.accept(timeout=cfg.timeout)
            netbench_responder(ch, sizes, args.repetitions)
            ch.close()
            listener.close()
            return 0
        if args.connect:
            host, port = args.connect.rsplit(":", 1)
            a, b = connect_channel((host, int(port)), cfg), None
        else:
            a, b = tcp_pair(cfg)
    t = None
    if b is not None:
        t = threading.Thread(target=netbench_responder, args=(b, sizes, args.repetitions), daemon=True)
        t.start()
    res = netbench(a, sizes, args.repetitions)
    if t is not None:
        t.join()
        b.close()
    a.close()
    fh = _open_out(args.output)
    print(f"rtt {res.rtt!r} s ({res.clock} clock)", file=sys.stderr)
    write_netbench_csv(res, fh)
    _close_out(fh)
    return 0


def cmd_relay(args) -> int:
    from ..transport import TcpRelay

    host, port = args.listen.rsplit(":", 1)
    fhost, fport = args.forward.rsplit(":", 1)
    relay = TcpRelay((fhost, int(fport)), listen=(host, int(port)))
    print(f"relay {relay.address[0]}:{relay.address[1]} -> {fhost}:{fport}", flush=True)
    try:
        if args.duration:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        relay.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wanbody", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_run(sp):
        sp.add_argument("-c", "--config", help="configuration file")
        _add(sp, RUN_FLAGS)
        _add(sp, NET_FLAGS)
        sp.add_argument("-o", "--output", help="output CSV (default stdout)")
        return sp

    sp = with_run(sub.add_parser("predict", help="step-time breakdown of one run"))
    sp.set_defaults(func=cmd_predict)

    sp = with_run(sub.add_parser("sweep", help="speedup/efficiency curves over s or wide-area bandwidth"))
    sp.add_argument("--vary", choices=("s", "sigma"), required=True)
    sp.add_argument("--values", required=True, help="comma separated values")
    sp.add_argument("--s", type=int, help="site count for bandwidth sweeps")
    sp.set_defaults(func=cmd_sweep)

    sp = with_run(sub.add_parser("simulate", help="run the multi-site simulator"))
    _add(sp, SIM_FLAGS)
    sp.add_argument("--compare", help="write the model comparison CSV here")
    sp.add_argument("--decomposition", help="write the slab history CSV here")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("validate", help="run oracle suites")
    sp.add_argument("--suite", choices=("all", "model", "engine", "protocol", "transport"), default="all")
    sp.set_defaults(func=cmd_validate)

    sp = with_run(sub.add_parser("netbench", help="latency/throughput benchmark"))
    sp.add_argument("--backend", choices=("simulated", "tcp"), default="simulated")
    sp.add_argument("--sizes", default="1024,1048576,16777216")
    sp.add_argument("--repetitions", type=int, default=3)
    sp.add_argument("--latency", type=float, help="simulated round trip (s)")
    sp.add_argument("--bandwidth", type=float, help="simulated bandwidth (bytes/s)")
    sp.add_argument("--streams", type=int)
    sp.add_argument("--serve", metavar="HOST:PORT", help="run the responder side")
    sp.add_argument("--connect", metavar="HOST:PORT", help="connect to a responder")
    sp.set_defaults(func=cmd_netbench)

    sp = sub.add_parser("relay", help="forward channels to another host")
    sp.add_argument("--listen", default="127.0.0.1:0")
    sp.add_argument("--forward", required=True, metavar="HOST:PORT")
    sp.add_argument("--duration", type=float, help="exit after this many seconds")
    sp.set_defaults(func=cmd_relay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"wanbody: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
