"""Operator command line.

Subcommands: ``serve`` (host the instrument), ``sweep`` (evenly spaced
sweep with a line fit), ``doe`` (Latin-square effect screen), ``inverse``
(GP fit + inverse design + verification), and the LLM front doors ``ask``,
``extract`` and ``toolchat``.

Report commands write a tab-delimited data file and render a PNG figure
next to it; ``--json`` prints the same data as one machine-readable
object.  Exit codes: 0 success, 1 runtime or remote failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import threading
from datetime import datetime, timezone

import numpy as np

from helios import client, doe, learn, llm, report
from helios.client import (
    ClientConfig,
    InstrumentKind,
    ProtocolError,
    TransportError,
    instrument_catalog,
    make_instrument,
)
from helios.config import CliConfig, ConfigError, apply_flags, load_config
from helios.service import InstrumentService, build_server
from helios.sim import (
    COUNT_MAX,
    CalibrationError,
    default_model,
    load_calibration,
)

_INSTRUMENTS = {kind.name: kind for kind in InstrumentKind}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="helios",
        description="software twin of the RGB-LED photometer instrument")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, client_side=True):
        p.add_argument("--config", help="path to a helios config file")
        p.add_argument("--json", action="store_true",
                       help="emit machine-readable JSON on stdout")
        if client_side:
            p.add_argument("--base-url", dest="base_url",
                           help="service URL (env HELIOS_BASE_URL)")

    p = sub.add_parser("serve", help="run the instrument service")
    common(p, client_side=False)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--calibration", help="calibration file (helios-cal/1)")
    p.add_argument("--latency", type=float,
                   help="artificial seconds per measurement")
    p.add_argument("--queue-timeout", dest="queue_timeout", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-path", dest="log_path")
    p.add_argument("--static-dir", dest="static_dir",
                   help="control-panel bundle served at /")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("sweep", help="sweep the green channel and fit a line")
    common(p)
    p.add_argument("-n", "--points", type=int, default=5)
    p.add_argument("--instrument", choices=sorted(_INSTRUMENTS),
                   default="GreenMachine1")
    p.add_argument("--out", default="sweep.tsv", help="data file to write")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("doe", help="9-run Latin square effect screen")
    common(p)
    p.add_argument("--response", choices=InstrumentKind.CLRGB.channels,
                   default="630nm")
    p.add_argument("--out", default="doe.tsv")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_doe)

    p = sub.add_parser("inverse", help="GP fit and inverse design to a target")
    common(p)
    p.add_argument("--target", default="10000,10000,10000",
                   help="comma-separated counts for 630nm,515nm,445nm")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--train-points", type=int, default=20)
    p.add_argument("--out", default="inverse.tsv")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_inverse)

    for name, func, arg in (("ask", cmd_ask, "question"),
                            ("extract", cmd_extract, "text"),
                            ("toolchat", cmd_toolchat, "question")):
        p = sub.add_parser(name, help=f"LLM {name}")
        common(p)
        p.add_argument(arg)
        p.add_argument("--provider-script", dest="provider_script",
                       help="scripted-provider file (helios-llm-script/1)")
        p.set_defaults(func=func)

    return parser


_FLAG_MAP = {
    "base_url": "base_url",
    "host": "host",
    "port": "port",
    "calibration": "calibration",
    "latency": "latency",
    "queue_timeout": "queue_timeout",
    "seed": "seed",
    "log_path": "log_path",
    "static_dir": "static_dir",
    "provider_script": "provider_script",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(getattr(args, "config", None))
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    apply_flags(config, args, _FLAG_MAP)
    try:
        return args.func(config, args)
    except (TransportError, ProtocolError, llm.BridgeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 0


def cmd_serve(config: CliConfig, args) -> int:
    if config.calibration:
        try:
            model = load_calibration(config.calibration)
        except CalibrationError as e:
            print(f"error: {e}", file=sys.stderr)
            return 2
    else:
        model = default_model()

    service = InstrumentService(
        model, seed=config.seed, latency_s=config.latency,
        queue_timeout_s=config.queue_timeout, log_path=config.log_path,
        static_dir=config.static_dir, token=config.token)
    try:
        server = build_server(service, config.host, config.port)
    except OSError as e:
        print(f"error: cannot bind {config.host}:{config.port}: {e}",
              file=sys.stderr)
        return 2

    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", flush=True)

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    stop.wait()
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)
    return 0


def _client_config(config: CliConfig) -> ClientConfig:
    return ClientConfig(base_url=config.base_url, timeout=config.timeout,
                        retries=config.retries,
                        backoff_base=config.backoff_base)


def cmd_sweep(config: CliConfig, args) -> int:
    if args.points < 2:
        print("error: a sweep needs at least 2 points", file=sys.stderr)
        return 2
    kind = _INSTRUMENTS[args.instrument]
    channel = "515nm" if "515nm" in kind.channels else kind.channels[0]
    col = kind.channels.index(channel)
    cc = _client_config(config)

    x = doe.linspace(0.0, 1.0, args.points)
    y, failures = [], 0
    for g in x:
        try:
            y.append(float(client.measure(kind, {"G": float(g)}, cc)[col]))
        except (TransportError, ProtocolError) as e:
            print(f"point G={g:.3f} failed: {e}", file=sys.stderr)
            y.append(np.nan)
            failures += 1

    if failures == len(x):
        print("error: every measurement failed; no fit", file=sys.stderr)
        return 1

    y_arr = np.asarray(y)
    # saturated counts sit on the 16-bit rail and would bias the line
    usable = ~np.isnan(y_arr) & (y_arr < COUNT_MAX)
    result = None
    if failures / len(x) <= 0.2 and usable.sum() >= 2:
        result = doe.sweep_fit(np.asarray(x)[usable], y_arr[usable])

    rows = [(float(xi), "" if np.isnan(yi) else int(yi),
             "" if result is None else f"{result.slope * xi + result.intercept:.2f}")
            for xi, yi in zip(x, y)]
    report.write_delimited(args.out, ["G", channel, "fit"], rows)
    if not args.no_figure and result is not None:
        report.sweep_figure(report.figure_path_for(args.out),
                            np.asarray(x)[usable], y_arr[usable],
                            result.fitted(), "G LED input level",
                            f"intensity at {channel}")

    if args.json:
        payload = {"instrument": kind.name, "channel": channel,
                   "failures": failures,
                   "sweep": result.to_dict() if result else None}
        print(json.dumps(payload))
        return 0

    for xi, yi in zip(x, y):
        print(f"  G={xi:.3f}  {channel}={'failed' if np.isnan(yi) else int(yi)}")
    if result is None:
        print("fit skipped: more than 20% of the points failed")
    else:
        print(f"The slope is {result.slope:.2f}, intercept is {result.intercept:.2f}")
    print(f"wrote {args.out}")
    return 0


def cmd_doe(config: CliConfig, args) -> int:
    kind = InstrumentKind.CLRGB
    cc = _client_config(config)
    design = doe.latin_square({"R": [0.0, 0.5, 1.0],
                               "G": [0.0, 0.5, 1.0],
                               "B": [0.0, 0.5, 1.0]})
    outputs = []
    for run in design.runs:
        outputs.append(client.measure(kind, dict(zip(design.factors, run)), cc))
    outputs = np.asarray(outputs, dtype=float)

    col = kind.channels.index(args.response)
    table = doe.anova_effects(design, outputs[:, col])

    rows = [list(run) + [int(v) for v in out]
            for run, out in zip(design.runs, outputs)]
    report.write_delimited(args.out, ["R", "G", "B", *kind.channels], rows)
    if not args.no_figure:
        report.anova_figure(report.figure_path_for(args.out), table,
                            args.response)

    if args.json:
        print(json.dumps({"design": design.to_dict(),
                          "outputs": outputs.tolist(),
                          "response": args.response,
                          "anova": table.to_dict()}))
    else:
        print(table.to_text(args.response))
        print(f"wrote {args.out}")
    return 0


def cmd_inverse(config: CliConfig, args) -> int:
    try:
        target = np.array([float(v) for v in args.target.split(",")])
        if target.shape != (3,):
            raise ValueError
    except ValueError:
        print("error: --target needs 3 comma-separated numbers", file=sys.stderr)
        return 2

    kind = InstrumentKind.CLRGB
    cc = _client_config(config)
    rng = np.random.default_rng(args.seed)
    X = rng.uniform(0.0, 0.8, size=(args.train_points, 3))
    Y = np.array([client.measure(kind, dict(zip(("R", "G", "B"), row)), cc)
                  for row in X], dtype=float)

    model = learn.gp_fit(X, Y)
    inverse = learn.inverse_design(model, target)
    x = inverse.setting
    predicted_mean, predicted_std = learn.gp_predict(model, x.as_array())

    checks = np.array([
        client.measure(kind, {"R": x.r, "G": x.g, "B": x.b}, cc)
        for _ in range(10)], dtype=float)
    measured_mean = checks.mean(axis=0)
    measured_std = checks.std(axis=0)

    on_boundary = any(v in (0.0, 1.0) for v in (x.r, x.g, x.b))
    rows = [(c, float(t), float(pm), float(ps), float(mm), float(ms))
            for c, t, pm, ps, mm, ms in zip(
                kind.channels, target, predicted_mean, predicted_std,
                measured_mean, measured_std)]
    report.write_delimited(
        args.out,
        ["channel", "target", "predicted", "predicted_std",
         "measured_mean", "measured_std"], rows)
    if not args.no_figure:
        report.inverse_figure(report.figure_path_for(args.out),
                              kind.channels, target, predicted_mean,
                              predicted_std, measured_mean, measured_std)

    payload = {
        "seed": args.seed,
        "target": target.tolist(),
        "solution": {"R": x.r, "G": x.g, "B": x.b},
        "converged": inverse.converged,
        "predicted_mean": predicted_mean.tolist(),
        "predicted_std": predicted_std.tolist(),
        "measured_mean": measured_mean.tolist(),
        "measured_std": measured_std.tolist(),
    }
    if args.json:
        print(json.dumps(payload))
        return 0

    print(f"seed: {args.seed}")
    print(f"solution: R={x.r:.5f} G={x.g:.5f} B={x.b:.5f}")
    if not inverse.converged:
        print("warning: optimizer did not converge; showing the best point")
    if on_boundary:
        print("warning: solution pinned at the input boundary; "
              "the target may be out of reach")
    print("channel   target   predicted (std)      measured (std)")
    for c, t, pm, ps, mm, ms in rows:
        print(f"{c:>7} {t:>8.0f}   {pm:>9.1f} ({ps:.1f})   {mm:>9.1f} ({ms:.1f})")
    print(f"wrote {args.out}")
    return 0


def _provider_session(config: CliConfig) -> llm.ProviderSession:
    if config.provider_script:
        return llm.session_from_script(
            config.provider_script, model=config.provider_model or "scripted",
            temperature=config.temperature, max_requests=config.max_requests,
            max_tokens=config.max_tokens)
    if config.provider_endpoint and config.provider_model:
        return llm.ProviderSession(llm.ProviderConfig(
            endpoint=config.provider_endpoint, model=config.provider_model,
            credential_env=config.credential_env,
            temperature=config.temperature, max_requests=config.max_requests,
            max_tokens=config.max_tokens))
    raise ConfigError(
        "no LLM provider configured: give --provider-script or set "
        "provider.endpoint and provider.model in the config file")


def _audit(config: CliConfig, command: str, messages) -> None:
    entry = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "messages": [m.to_wire() for m in messages],
    }
    with open(config.audit_path, "a") as f:
        f.write(json.dumps(entry) + "\n")


def cmd_ask(config: CliConfig, args) -> int:
    session = _provider_session(config)
    catalog = instrument_catalog()
    messages = [llm.system(llm.build_selection_prompt(catalog)),
                llm.user(args.question)]
    reply = llm.complete(session, messages)
    _audit(config, "ask", messages + [reply])
    if args.json:
        print(json.dumps({"recommendation": reply.content}))
    else:
        print(reply.content)
    return 0


def cmd_extract(config: CliConfig, args) -> int:
    session = _provider_session(config)
    setting = llm.extract_rgb(args.text, session)
    print(json.dumps({"R": setting.r, "G": setting.g, "B": setting.b}))
    return 0


def cmd_toolchat(config: CliConfig, args) -> int:
    session = _provider_session(config)
    cc = _client_config(config)
    registry, specs = {}, []
    for kind in InstrumentKind:
        registry[kind.name] = make_instrument(kind, cc)
        specs.append(llm.build_tool_spec(kind))

    final, transcript = llm.tool_call_loop(
        [llm.user(args.question)], registry, specs, session)
    _audit(config, "toolchat", transcript)
    if args.json:
        print(json.dumps({"answer": final.content,
                          "transcript": [m.to_wire() for m in transcript]}))
    else:
        print(final.content)
    return 0


if __name__ == "__main__":
    sys.exit(main())
