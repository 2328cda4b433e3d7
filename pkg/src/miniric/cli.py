"""``miniric``: operator command line.

Lifecycle verbs accept both positional arguments and ``--flag=value``
forms (``install example_xapp 1.0.0 ricxapp`` equals ``install
--xapp_chart_name=example_xapp --version=1.0.0 --namespace=ricxapp``).
``--json`` switches any verb to a versioned machine-readable envelope.

The backend is chosen by ``MINIRIC_ENDPOINT``: unset (or ``local``) runs
the platform in this process with charts and SDL persisted under
``MINIRIC_HOME``; an URL talks to a ``miniric serve`` process.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, TextIO

import yaml

from .errors import MalformedJson, MiniRicError

JSON_SCHEMA = "miniric.cli/1"
DEFAULT_NAMESPACE = "ricxapp"
REQUIRED = object()

# verb -> ordered (name, default) pairs; each name is also a --flag
_ARGS: dict[str, list[tuple[str, object]]] = {
    "onboard": [("config_file_path", REQUIRED), ("schema_file_path", None)],
    "install": [("xapp_chart_name", REQUIRED), ("version", REQUIRED), ("namespace", DEFAULT_NAMESPACE)],
    "uninstall": [("xapp_chart_name", REQUIRED), ("namespace", DEFAULT_NAMESPACE)],
    "upgrade": [
        ("xapp_chart_name", REQUIRED),
        ("old_version", REQUIRED),
        ("new_version", REQUIRED),
        ("namespace", DEFAULT_NAMESPACE),
    ],
    "health_check": [("xapp_chart_name", REQUIRED), ("namespace", DEFAULT_NAMESPACE)],
    "download_values": [("xapp_chart_name", REQUIRED), ("version", REQUIRED), ("output_path", None)],
    "logs": [("xapp_chart_name", REQUIRED), ("namespace", DEFAULT_NAMESPACE)],
    "config set": [("xapp_chart_name", REQUIRED), ("namespace", REQUIRED), ("path", REQUIRED), ("value", REQUIRED)],
}
_ARGS["rollback"] = _ARGS["upgrade"]


class UsageError(Exception):
    pass


def _add_dual(p: argparse.ArgumentParser, verb: str) -> None:
    for name, _default in _ARGS[verb]:
        p.add_argument(f"pos_{name}", nargs="?", metavar=name.upper(), default=None)
        p.add_argument(f"--{name}", dest=name, default=None)


def _resolve(args: argparse.Namespace, verb: str) -> dict:
    out = {}
    for name, default in _ARGS[verb]:
        pos, flag = getattr(args, f"pos_{name}"), getattr(args, name)
        if pos is not None and flag is not None and pos != flag:
            raise UsageError(f"{name} given twice ({pos!r} and {flag!r})")
        value = flag if flag is not None else pos
        if value is None:
            if default is REQUIRED:
                raise UsageError(f"missing {name} (positional or --{name}=...)")
            value = default
        out[name] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="miniric", description="Operate a miniature Near-RT RIC.")
    parser.add_argument("--json", action="store_true", default=False, help="machine-readable output")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="machine-readable output")
    sub = parser.add_subparsers(dest="verb", metavar="VERB")
    sub.required = True

    def verb(name, help_text, aliases=()):
        return sub.add_parser(name, help=help_text, parents=[common], aliases=list(aliases))

    p = verb("onboard", "validate a descriptor (and schema) and store it as a chart")
    _add_dual(p, "onboard")
    p.add_argument("--force", action="store_true", help="replace an existing chart of the same version")

    p = verb("install", "deploy an onboarded chart")
    _add_dual(p, "install")
    p.add_argument("--overridefile", default=None, help="JSON or YAML values overriding the chart's descriptor")

    _add_dual(verb("uninstall", "SIGTERM an instance, wait out the grace period, release it"), "uninstall")
    _add_dual(verb("upgrade", "uninstall OLD_VERSION, install NEW_VERSION"), "upgrade")
    _add_dual(verb("rollback", "same as upgrade, towards an earlier version"), "rollback")
    verb("health", "check the chart repository")
    verb("get_charts_list", "list onboarded charts")
    _add_dual(verb("health_check", "probe an instance (readiness, liveness, RMR)"), "health_check")
    _add_dual(verb("download_values", "print or save a chart's effective values", aliases=["download_values_yaml"]), "download_values")

    p = verb("config", "edit the live configuration of an instance")
    csub = p.add_subparsers(dest="config_verb", metavar="ACTION")
    csub.required = True
    _add_dual(csub.add_parser("set", help="set PATH (dotted) to VALUE (JSON or text)", parents=[common]), "config set")

    verb("instances", "list instances and their state")
    _add_dual(verb("logs", "print an instance's log entries"), "logs")
    verb("routes", "dump the routing state of the message bus")

    p = verb("sdl", "inspect the shared data layer")
    ssub = p.add_subparsers(dest="sdl_verb", metavar="ACTION")
    ssub.required = True
    ssub.add_parser("healthcheck", help="probe the store", parents=[common])
    q = ssub.add_parser("keys", help="list keys of a namespace", parents=[common])
    q.add_argument("namespace")
    q.add_argument("prefix", nargs="?", default="")
    q = ssub.add_parser("get", help="read one key", parents=[common])
    q.add_argument("namespace")
    q.add_argument("key")
    q = ssub.add_parser("set", help="write one key (VALUE is JSON or text)", parents=[common])
    q.add_argument("namespace")
    q.add_argument("key")
    q.add_argument("value")

    p = verb("subs", "inspect subscriptions held by the subscription manager")
    bsub = p.add_subparsers(dest="subs_verb", metavar="ACTION")
    bsub.required = True
    bsub.add_parser("list", help="list subscription records", parents=[common])
    q = bsub.add_parser("delete", help="delete a subscription for all its subscribers", parents=[common])
    q.add_argument("subid", type=int)

    p = verb("serve", "run a platform and serve the operations over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8099)
    p.add_argument("--gnbs", type=int, default=0, help="E2 setup this many reference gNodeBs first")
    p.add_argument("--onboard-demos", action="store_true", help="onboard the bundled demo charts")
    p.add_argument("--realtime", action="store_true", help="advance the simulated clock with wall time")
    p.add_argument("--home", default=None, help="state directory (default: $MINIRIC_HOME or ~/.miniric)")

    p = verb("advance", "advance the simulated clock")
    p.add_argument("ms", type=int)

    p = verb("add-gnb", "E2 setup of a reference gNodeB")
    p.add_argument("--plmn_id", default="734")
    p.add_argument("--nodeb_id", default="733")
    return parser


def _normalize(argv: list[str]) -> list[str]:
    # tolerate a stray third dash (---old_version=...)
    return ["--" + a.lstrip("-") if a.startswith("---") else a for a in argv]


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_json_file(path: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(f"{path}: {exc}") from None


def _load_values_file(path: str) -> dict:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise MalformedJson(f"{path}: override values must be a mapping")
    return doc


# -- command execution -----------------------------------------------------------


def _run(args: argparse.Namespace, backend) -> tuple[str, object]:
    """Returns (command name, result)."""
    v = args.verb
    if v == "download_values_yaml":
        v = "download_values"
    if v == "onboard":
        a = _resolve(args, v)
        config = _load_json_file(a["config_file_path"])
        schema = _load_json_file(a["schema_file_path"]) if a["schema_file_path"] else None
        return v, backend.call("onboard", config=config, schema=schema, force=args.force)
    if v == "install":
        a = _resolve(args, v)
        override = _load_values_file(args.overridefile) if args.overridefile else None
        return v, backend.call("install", name=a["xapp_chart_name"], version=a["version"], namespace=a["namespace"], override=override)
    if v == "uninstall":
        a = _resolve(args, v)
        return v, backend.call("uninstall", name=a["xapp_chart_name"], namespace=a["namespace"])
    if v in ("upgrade", "rollback"):
        a = _resolve(args, v)
        return v, backend.call(
            v, name=a["xapp_chart_name"], old_version=a["old_version"], new_version=a["new_version"], namespace=a["namespace"]
        )
    if v in ("health", "get_charts_list", "instances", "routes"):
        return v, backend.call(v)
    if v == "health_check":
        a = _resolve(args, v)
        return v, backend.call(v, name=a["xapp_chart_name"], namespace=a["namespace"])
    if v == "download_values":
        a = _resolve(args, v)
        result = backend.call(v, name=a["xapp_chart_name"], version=a["version"])
        if a["output_path"]:
            out = Path(a["output_path"])
            if out.is_dir():
                out = out / "values.yaml"
            out.write_text(result["values"], encoding="utf-8")
            result = {**result, "output_path": str(out)}
        return v, result
    if v == "config":
        a = _resolve(args, "config set")
        result = backend.call(
            "config_set", name=a["xapp_chart_name"], namespace=a["namespace"], path=a["path"], value=_parse_value(a["value"])
        )
        return "config set", {"path": a["path"], "config": result}
    if v == "logs":
        a = _resolve(args, v)
        return v, backend.call(v, name=a["xapp_chart_name"], namespace=a["namespace"])
    if v == "sdl":
        sv = args.sdl_verb
        if sv == "healthcheck":
            return "sdl healthcheck", backend.call("sdl_healthcheck")
        if sv == "keys":
            return "sdl keys", backend.call("sdl_keys", ns=args.namespace, prefix=args.prefix)
        if sv == "get":
            return "sdl get", backend.call("sdl_get", ns=args.namespace, key=args.key)
        return "sdl set", backend.call("sdl_set", ns=args.namespace, key=args.key, value=_parse_value(args.value))
    if v == "subs":
        if args.subs_verb == "list":
            return "subs list", backend.call("subs_list")
        return "subs delete", backend.call("subs_delete", subid=args.subid)
    if v == "advance":
        return v, backend.call("advance", ms=args.ms)
    if v == "add-gnb":
        return v, backend.call("add_gnb", plmn_id=args.plmn_id, nodeb_id=args.nodeb_id)
    raise UsageError(f"unknown verb {v!r}")


def _yes(flag) -> str:
    return "yes" if flag else "no"


def _human(command: str, result) -> list[str]:
    if command == "onboard":
        return [f"onboarded {result['name']} {result['version']} (sha256 {result['content_hash'][:12]})"]
    if command in ("install", "upgrade", "rollback"):
        return [f"{result['name']} {result['version']} {result['namespace']} {result['state']}"]
    if command == "uninstall":
        return [f"{result['name']} {result['namespace']} {result['state']}"] + [f"warning: {w}" for w in result.get("warnings", [])]
    if command == "health":
        return [f"chart repository {result['status']} ({result['charts']} charts)"]
    if command == "get_charts_list":
        return [f"{c['name']}\t{c['version']}\tcreated={c['created_at']}\tsha256={c['content_hash'][:12]}" for c in result] or [
            "no charts onboarded"
        ]
    if command == "health_check":
        r = result
        return [
            f"{r['name']} {r['namespace']} {r['state']} healthy={_yes(r['healthy'])} "
            f"ready={_yes(r['ready'])} alive={_yes(r['alive'])} rmr={_yes(r['rmr'])}"
        ]
    if command == "download_values":
        if "output_path" in result:
            return [f"values for {result['name']} {result['version']} written to {result['output_path']}"]
        return [result["values"].rstrip("\n")]
    if command == "config set":
        return [f"updated {result['path']}"]
    if command == "instances":
        rows = [("NAMESPACE", "NAME", "VERSION", "STATE", "RMR", "HTTP")]
        rows += [(i["namespace"], i["name"], i["version"], i["state"], i["rmr_address"], i["http_endpoint"]) for i in result]
        widths = [max(len(str(r[c])) for r in rows) for c in range(len(rows[0]))]
        return ["  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
    if command == "logs":
        return [f"{e['timestamp']}\t{e['criticality']}\t{e['message']}" for e in result]
    if command == "routes":
        lines = ["newrt|start|rtmgr", *result["master"], f"newrt|end|{len(result['master'])}"]
        lines += [f"meid {m} -> {owner}" for m, owner in result["meid_ownership"].items()]
        return lines
    if command == "sdl healthcheck":
        return ["ok" if result["healthy"] else "unhealthy"]
    if command == "sdl keys":
        return list(result)
    if command == "sdl get":
        v = result["value"]
        return [v if isinstance(v, str) else json.dumps(v, sort_keys=True)]
    if command == "sdl set":
        return [f"set {result['namespace']}/{result['key']}"]
    if command == "subs list":
        out = []
        for r in result:
            hosts = ",".join(s["Host"] for s in r["subscribers"])
            out.append(f"{r['SubscriptionId']}\t{r['Meid']}\tranfn={r['RANFunctionID']}\t{r['state']}\t{hosts}")
        return out or ["no subscriptions"]
    if command == "subs delete":
        return [f"deleted subscription {result['subid']}"]
    if command == "advance":
        return [f"now {result['now']} ms"]
    if command == "add-gnb":
        return [result["meid"]]
    return [json.dumps(result, sort_keys=True)]


def _serve(args, out: TextIO) -> int:
    from .demos import DEMOS, descriptor_path, schema_path
    from .ops import LocalBackend, local_ric, make_server, serve_forever

    ric = local_ric(Path(args.home) if args.home else None)
    backend = LocalBackend(ric)
    for i in range(args.gnbs):
        ric.add_gnb(nodeb_id=str(733 + i))
    if args.onboard_demos:
        for name in DEMOS:
            ric.appmgr.onboard(descriptor_path(name), schema_path(name), force=True)
    server = make_server(backend, args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving on http://{host}:{port}", file=out, flush=True)
    try:
        serve_forever(server, backend, realtime=args.realtime)
    except KeyboardInterrupt:
        pass
    return 0


def main(argv: Optional[list[str]] = None, backend=None, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    argv = _normalize(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.verb == "serve":
        return _serve(args, out)
    command = args.verb
    try:
        if backend is None:
            from .ops import backend_from_env

            backend = backend_from_env()
        command, result = _run(args, backend)
    except UsageError as exc:
        print(f"miniric {args.verb}: error: {exc}", file=err)
        return 2
    except MiniRicError as exc:
        if args.json:
            print(json.dumps({"schema": JSON_SCHEMA, "command": command, **exc.to_json()}, sort_keys=True), file=out)
        print(f"Error: {exc.name}: {exc}", file=err)
        return 1
    except OSError as exc:
        print(f"Error: {type(exc).__name__}: {exc}", file=err)
        return 1
    if args.json:
        print(json.dumps({"schema": JSON_SCHEMA, "command": command, "result": result}, indent=2, sort_keys=True), file=out)
    else:
        for line in _human(command, result):
            print(line, file=out)
    if command == "sdl healthcheck" and not result["healthy"]:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
