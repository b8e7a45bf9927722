"""Command line client for the pipeline service.

The CLI never runs pipeline code itself: it assembles a config from a file
plus ``--set`` overrides, posts a request to the HTTP service (an in-process
instance by default, a remote one with ``--server``), and translates the
structured error payload into a process exit code:

    0  success
    1  unexpected failure
    2  bad input (files, config, ids, formats)
    3  training diverged
    4  artifact/data checksum mismatch
    5  not enough data for the requested computation
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

from .config import RunConfig, apply_overrides, load_config
from .errors import EXIT_FAILURE, EXIT_INPUT, EXIT_OK, PipelineError

_COMMAND_PATHS = {
    "train": "/train",
    "build-features": "/build-features",
    "explain": "/explain",
    "evaluate": "/evaluate",
    "render": "/render",
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON config file")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="override a config value by dotted path (repeatable)",
    )
    common.add_argument("--output-dir", metavar="DIR", help="shorthand for --set output_dir=DIR")
    common.add_argument("--seed", type=int, metavar="N", help="shorthand for --set seed=N")
    common.add_argument(
        "--server",
        metavar="URL",
        help="base URL of a running service; default runs the service in-process",
    )
    common.add_argument(
        "--json", action="store_true", help="print the raw response JSON instead of a summary"
    )

    p = argparse.ArgumentParser(prog="fgns", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train the classifier and save model.json")
    sub.add_parser(
        "build-features",
        parents=[common],
        help="mine and validate the per-class feature catalog and prototypes",
    )
    p_explain = sub.add_parser(
        "explain", parents=[common], help="explain one prediction with example neighbors"
    )
    p_explain.add_argument("--id", type=int, required=True, help="image id within the split")
    p_explain.add_argument("--split", choices=["train", "test"], default="test")
    p_explain.add_argument("--method", choices=["fgns", "knn_baseline"], default="fgns")
    p_explain.add_argument(
        "--overlay", action="store_true", help="tint the class's feature masks on the panel"
    )
    sub.add_parser(
        "evaluate", parents=[common], help="run the two-method distance comparison on test queries"
    )
    p_render = sub.add_parser(
        "render", parents=[common], help="re-render the panel for a saved explanation"
    )
    p_render.add_argument("--explanation", required=True, metavar="PATH")
    p_render.add_argument("--overlay", action="store_true")
    return p


def _build_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    overrides = list(args.overrides)
    if args.output_dir is not None:
        overrides.append(f"output_dir={args.output_dir}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg


def _request_payload(args: argparse.Namespace, cfg: RunConfig) -> dict:
    payload: dict = {"config": cfg.model_dump(mode="json")}
    if args.command == "explain":
        payload.update(
            query_id=args.id, split=args.split, method=args.method, overlay=args.overlay
        )
    elif args.command == "render":
        payload.update(explanation_path=args.explanation, overlay=args.overlay)
    return payload


def _summarize_train(body: dict) -> str:
    lines = [
        f"trained on {body['n_train']} images, classes {body['classes']}",
        f"train accuracy {body['train_accuracy']:.4f}",
        f"test accuracy  {body['test_accuracy']:.4f} ({body['n_test']} images)",
        f"model: {body['model_path']} (sha256 {body['model_checksum'][:12]})",
        f"config hash: {body['config_hash'][:12]}  ({body['seconds']:.1f}s)",
    ]
    return "\n".join(lines)


def _summarize_build(body: dict) -> str:
    lines = ["validated feature masks per class:"]
    for cls in sorted(body["per_class"], key=int):
        entry = body["per_class"][cls]
        top = entry["top_score"]
        top_text = f", top score {top:.4f}" if top is not None else ""
        lines.append(f"  class {cls}: {entry['n_masks']} masks{top_text}")
    if body["fallback_classes"]:
        lines.append(f"classes with no validated masks: {body['fallback_classes']}")
    lines.append(f"catalog: {body['catalog_path']}")
    lines.append(f"prototypes: {body['prototypes_path']}  ({body['seconds']:.1f}s)")
    return "\n".join(lines)


def _summarize_explain(body: dict) -> str:
    exp = body["explanation"]
    true = exp["true_class"]
    verdict = "" if true is None else (" (correct)" if true == exp["predicted_class"] else f" (true {true})")
    lines = [
        f"query {exp['query_id']} [{exp['query_split']}]: predicted class "
        f"{exp['predicted_class']}{verdict}",
        f"method {exp['method']}" + (" (fell back to activation k-NN)" if exp["fallback"] else ""),
    ]
    for rank, nb in enumerate(exp["neighbors"], start=1):
        lines.append(f"  {rank}. train id {nb['train_id']}  score {nb['score']:.6f}")
    lines.append(f"explanation: {body['explanation_path']}")
    lines.append(f"panel: {body['panel_path']}")
    return "\n".join(lines)


def _summarize_evaluate(body: dict) -> str:
    report = body["report"]
    lines = [
        "queries: {n_correct} correct + {n_incorrect} misclassified".format(**report["queries"]),
    ]
    for family in ("query_distance", "prototype_distance"):
        lines.append(f"{family.replace('_', ' ')}:")
        for method in sorted(report["methods"]):
            s = report["methods"][method][family]
            lines.append(
                f"  {method:<13} mean {s['mean']:.3f}  median {s['median']:.3f}  sd {s['sd']:.3f}"
            )
        t = report["tests"][family]["per_neighbor"]["pooled"]
        lines.append(f"  pooled t {t['t']:.3f}, p {t['p']:.3g}")
    lines.append(f"report: {body['report_json_path']}")
    lines.append(f"text:   {body['report_text_path']}")
    lines.append(f"histogram: {body['histogram_csv_path']}")
    return "\n".join(lines)


def _summarize(command: str, body: dict) -> str:
    if command == "train":
        return _summarize_train(body)
    if command == "build-features":
        return _summarize_build(body)
    if command == "explain":
        return _summarize_explain(body)
    if command == "evaluate":
        return _summarize_evaluate(body)
    return f"panel: {body['panel_path']}"


def _report_error(status: int, body: dict) -> int:
    if isinstance(body, dict) and "error" in body:
        err = body["error"]
        print(f"error ({err['kind']}): {err['message']}", file=sys.stderr)
        return int(err["exit_code"])
    if isinstance(body, dict) and "detail" in body:
        # request model validation failure from the service framework
        print(f"error (invalid request): {body['detail']}", file=sys.stderr)
        return EXIT_INPUT
    print(f"error: server returned status {status}: {body}", file=sys.stderr)
    return EXIT_FAILURE


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _build_config(args)
    except PipelineError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return exc.exit_code

    payload = _request_payload(args, cfg)
    path = _COMMAND_PATHS[args.command]
    try:
        if args.server:
            with httpx.Client(base_url=args.server, timeout=None) as client:
                resp = client.post(path, json=payload)
        else:
            from fastapi.testclient import TestClient

            from .service.app import create_app

            with TestClient(create_app(), raise_server_exceptions=False) as client:
                resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        print(f"error: cannot reach service: {exc}", file=sys.stderr)
        return EXIT_FAILURE

    try:
        body = resp.json()
    except ValueError:
        print(f"error: non-JSON response (status {resp.status_code})", file=sys.stderr)
        return EXIT_FAILURE

    if resp.status_code == 200:
        print(json.dumps(body, indent=2, sort_keys=True) if args.json else _summarize(args.command, body))
        return EXIT_OK
    return _report_error(resp.status_code, body)


if __name__ == "__main__":
    sys.exit(main())
