"""Command-line entry point: ``serve`` a node, or drive a running master.

Client subcommands talk to a master over TCP (``--master host:port``), or,
with ``--inproc N``, spin up a throwaway in-process cluster for one command.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .cluster import LocalCluster, await_registrations, register_worker
from .config import ClusterConfig, ConfigError, load_config
from .master import Master
from .service import Session, serve_master
from .adaptivity import Placement
from .transport import BarrierTimeout, TcpEndpoint, TransportError
from .wire import CLIENT, MASTER, Tag, msg
from .worker import Worker

log = logging.getLogger("adaptrdf")

CLIENT_COMMANDS = ("load", "query", "workload", "update", "metrics", "shutdown")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaptrdf", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--master", help="master address host:port")
    ap.add_argument("--inproc", type=int, metavar="N", help="run the command on a fresh in-process cluster of N workers")
    ap.add_argument("--data", help="triple file preloaded into the --inproc cluster")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--timeout", type=float)
    ap.add_argument("--freq-threshold", type=int)
    ap.add_argument("--proactivity-threshold", type=int)
    ap.add_argument("--rho-max", type=float)
    ap.add_argument("--hash-pin-file")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("serve", help="start a master or worker node (TCP)")
    s.add_argument("--role", choices=("master", "worker"))
    s.add_argument("--workers", type=int, help="number of workers (master)")
    s.add_argument("--id", type=int, dest="worker_id", help="worker id 0..N-1 (worker)")
    s.add_argument("--host", help="interface to listen on")
    s.add_argument("--port", type=int, help="listen port (master); workers default to an ephemeral port")
    s.add_argument("--master", dest="serve_master", help="master address host:port (worker)")

    s = sub.add_parser("load", help="partition a triple file across the workers")
    s.add_argument("file")
    s.add_argument("--assign", help="one worker id per triple, whitespace separated")
    for name, helptext in (("query", "run each query in a file"), ("workload", "run a query sequence, CSV out"), ("update", "apply a +/- triple batch")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("file")
    sub.choices["workload"].add_argument("--out", help="CSV path (default stdout)")
    sub.add_parser("stats", help="recompute and print global predicate statistics")
    sub.add_parser("metrics", help="print communication counters, Gini and replication ratio")
    sub.add_parser("shutdown", help="stop the master and its workers")
    return ap


def _config(args) -> ClusterConfig:
    overrides = {
        "seed": args.seed,
        "timeout": args.timeout,
        "freq_threshold": args.freq_threshold,
        "proactivity_threshold": args.proactivity_threshold,
        "rho_max": args.rho_max,
        "hash_pin_file": args.hash_pin_file,
    }
    if args.command == "serve":
        overrides.update(role=args.role, workers=args.workers, worker_id=args.worker_id, listen_host=args.host, port=args.port, transport="tcp")
    address = args.master or getattr(args, "serve_master", None)
    if address:
        host, _, port = address.rpartition(":")
        overrides.update(host=host or "127.0.0.1", port=int(port))
    return load_config(args.config, overrides)


def _request_args(args) -> dict:
    read = lambda p: Path(p).read_text(encoding="utf-8")
    if args.command == "load":
        return {"triples": read(args.file), "assignment": read(args.assign) if args.assign else None}
    if args.command in ("query", "workload"):
        return {"queries": read(args.file)}
    if args.command == "update":
        return {"updates": read(args.file)}
    return {}


def _print_result(command: str, result: dict, args, out=None, err=None) -> None:
    out = out or sys.stdout
    err = err or sys.stderr
    if command in ("load", "stats"):
        verb = "loaded" if command == "load" else "holding"
        print(f"{verb} {result['triples']} triples on {result['workers']} workers: {' '.join(map(str, result['main_counts']))}", file=out)
        print("predicate\tpS\tpO\teffective_pS\teffective_pO", file=out)
        for p, ps, po, eps, epo in result["stats"]:
            print(f"{p}\t{ps:.4f}\t{po:.4f}\t{eps:.4f}\t{epo:.4f}", file=out)
    elif command == "query":
        for i, r in enumerate(result["results"], 1):
            print(f"# query {i}\tmode={r['mode']}\trows={r['rows']}", file=out)
            out.write(r["text"])
            print(f"# query {i}\twall_ms={r['wall_ms']:.3f}", file=err)
    elif command == "workload":
        fh = open(args.out, "w", newline="", encoding="utf-8") if getattr(args, "out", None) else out
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(result["columns"])
            w.writerows(result["rows"])
        finally:
            if fh is not out:
                fh.close()
    elif command == "update":
        print(f"inserted {result['inserted']} deleted {result['deleted']} replica_changes {result['changed']} replication_ratio {result['replication_ratio']:.6f}", file=out)
    elif command == "metrics":
        out.write(result["text"])


def _serve(cfg: ClusterConfig) -> int:
    if cfg.role == "master":
        ep = TcpEndpoint(MASTER, cfg.listen_host or cfg.host, cfg.port)
        log.info("master listening on %s:%d for %d workers", ep.host, ep.port, cfg.workers)
        await_registrations(ep, cfg.workers, timeout=None)
        master = Master(ep, cfg.workers, cfg.adaptivity, seed=cfg.seed, timeout=cfg.timeout)
        serve_master(master, ep)
        ep.close()
        return 0
    ep = TcpEndpoint(cfg.worker_id, cfg.listen_host or cfg.host, 0)
    register_worker(ep, cfg.host, cfg.port)
    # the cluster size comes from the master's peer list
    peers = ep.recv(lambda m: m.tag == Tag.PEERS, cfg.timeout)
    n = len(peers.peers)
    worker = Worker(cfg.worker_id, n, ep, Placement(n, cfg.pins), cfg.timeout)
    worker.handle(peers)
    worker.serve()
    ep.close()
    return 0


def _remote(cfg: ClusterConfig, command: str, payload: dict) -> dict:
    ep = TcpEndpoint(CLIENT, "127.0.0.1", 0)
    try:
        ep.set_address(MASTER, cfg.host, cfg.port)
        ep.send(MASTER, msg(Tag.CLIENT_REQUEST, CLIENT, op=1, command=command, args=json.dumps(payload)))
        reply = ep.recv(lambda m: m.tag == Tag.CLIENT_REPLY, cfg.timeout)
    finally:
        ep.close()
    result = json.loads(reply.output)
    if reply.status != 0:
        raise RuntimeError(result.get("error", "master reported an error"))
    return result


def _inproc(cfg: ClusterConfig, n: int, data: str | None, command: str, payload: dict) -> dict:
    with LocalCluster(n, config=cfg.adaptivity, pins=cfg.pins, seed=cfg.seed, timeout=cfg.timeout) as cluster:
        session = Session(cluster.master)
        if data and command != "load":
            session.cmd_load(Path(data).read_text(encoding="utf-8"))
        if command == "shutdown":
            return {}
        return session.handle(command, payload)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "serve":
            return _serve(cfg)
        payload = _request_args(args)
        if args.inproc:
            result = _inproc(cfg, args.inproc, args.data, args.command, payload)
        else:
            result = _remote(cfg, args.command, payload)
        _print_result(args.command, result, args)
        return 0
    except (ConfigError, OSError, TransportError, BarrierTimeout, RuntimeError, ValueError) as exc:
        print(f"adaptrdf: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
