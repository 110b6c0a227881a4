"""Command-line entry point: ``quadseq <command> ...``.

Every command prints a JSON run report on stdout (and to ``--report`` if
given). Exit codes: 0 success, 1 validation or filter failure, 2 usage
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__, codec, hourglass, preference, tdpo, topology, tri2quad
from .mesh import MeshError, load_obj, normalize, sample_point_cloud, save_obj
from .quality import FilterConfig, run_filter

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3

TOKEN_SUFFIXES = {".txt", ".tok", ".bin"}
LOGPROB_STREAMS = ("policy_w", "ref_w", "policy_l", "ref_l")


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage}: {cause}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunReport:
    def __init__(self, command: str, root: Path):
        self.command = command
        self.root = root
        self.inputs: dict[str, str] = {}
        self.timings_ms: dict[str, float] = {}
        self.outputs: dict = {}
        self.seeds: dict[str, int] = {}
        self.warnings: list[str] = []

    def add_input(self, path: Path) -> None:
        self.inputs[self.rel(path)] = sha256_file(path)

    def rel(self, path: Path) -> str:
        try:
            return Path(path).resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return Path(path).as_posix()

    @contextmanager
    def timed(self, stage: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings_ms[stage] = self.timings_ms.get(stage, 0.0) + (time.perf_counter() - t0) * 1e3

    def as_dict(self) -> dict:
        return {
            "tool": "quadseq",
            "version": __version__,
            "command": self.command,
            "inputs": self.inputs,
            "seeds": self.seeds,
            "timings_ms": {k: round(v, 3) for k, v in self.timings_ms.items()},
            "outputs": self.outputs,
            "warnings": self.warnings,
        }


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_dump(obj).encode("utf-8"))


def _map(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _outputs_for(inputs: list[Path], out: Path, suffix: str) -> list[Path]:
    """One input writes to ``out``; several inputs write ``<stem><suffix>`` files into directory ``out``."""
    if len(inputs) == 1 and not out.is_dir():
        return [out]
    out.mkdir(parents=True, exist_ok=True)
    return [out / (p.stem + suffix) for p in inputs]


def _warn(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


# tokenize / detokenize


def _tokenize_one(job) -> dict:
    src, dst, fmt, delimiters = job
    mesh = load_obj(src)
    qm = codec.canonicalize(normalize(mesh))
    toks = codec.tokenize(qm, delimiters)
    dst.parent.mkdir(parents=True, exist_ok=True)
    codec.write_tokens(dst, toks, fmt)
    return {
        "n_tokens": int(len(toks)),
        "n_faces": len(qm.faces),
        "n_triangles": qm.n_triangles,
        "n_quads": qm.n_quads,
        "dropped_faces": qm.dropped_faces,
    }


def cmd_tokenize(args, report: RunReport) -> int:
    ins = [args.resolve(p) for p in args.inputs]
    outs = _outputs_for(ins, args.resolve(args.out), ".bin" if args.format == "bin" else ".txt")
    for p in ins:
        report.add_input(p)
    with report.timed("tokenize"):
        res = _map(_tokenize_one, [(i, o, args.format, args.delimiters) for i, o in zip(ins, outs)], args.jobs)
    report.outputs = {report.rel(o): r for o, r in zip(outs, res)}
    return EXIT_OK


def _detokenize_one(job) -> dict:
    src, dst, mode = job
    mesh, diag = codec.detokenize(codec.read_tokens(src), mode)
    dst.parent.mkdir(parents=True, exist_ok=True)
    save_obj(mesh, dst)
    return diag.as_dict()


def cmd_detokenize(args, report: RunReport) -> int:
    ins = [args.resolve(p) for p in args.inputs]
    outs = _outputs_for(ins, args.resolve(args.out), ".obj")
    for p in ins:
        report.add_input(p)
    with report.timed("detokenize"):
        res = _map(_detokenize_one, [(i, o, args.mode) for i, o in zip(ins, outs)], args.jobs)
    report.outputs = {report.rel(o): r for o, r in zip(outs, res)}
    return EXIT_OK


# quadify / filter / score


def _quadify_one(job) -> dict:
    src, dst, solver, max_angle = job
    mesh, stats = tri2quad.quadify(load_obj(src), solver=solver, max_angle_deg=max_angle)
    dst.parent.mkdir(parents=True, exist_ok=True)
    save_obj(mesh, dst)
    return stats.as_dict()


def cmd_quadify(args, report: RunReport) -> int:
    ins = [args.resolve(p) for p in args.inputs]
    outs = _outputs_for(ins, args.resolve(args.out), ".obj")
    for p in ins:
        report.add_input(p)
    with report.timed("quadify"):
        res = _map(_quadify_one, [(i, o, args.solver, args.max_angle) for i, o in zip(ins, outs)], args.jobs)
    report.outputs = {report.rel(o): r for o, r in zip(outs, res)}
    return EXIT_OK


def _load_filter_config(args) -> FilterConfig:
    return FilterConfig.load(args.resolve(args.config)) if args.config else FilterConfig()


def _filter_one(job) -> dict:
    src, cfg = job
    return run_filter(load_obj(src), cfg).as_dict()


def cmd_filter(args, report: RunReport) -> int:
    cfg = _load_filter_config(args)
    ins = [args.resolve(p) for p in args.inputs]
    for p in ins:
        report.add_input(p)
    with report.timed("filter"):
        verdicts = _map(_filter_one, [(p, cfg) for p in ins], args.jobs)
    report.outputs = {report.rel(p): v for p, v in zip(ins, verdicts)}
    if args.out:
        _write_json(args.resolve(args.out), report.outputs)
    return EXIT_OK if all(v["passed"] for v in verdicts) else EXIT_VALIDATION


def cmd_score(args, report: RunReport) -> int:
    ref_path, gen_path = args.resolve(args.ref), args.resolve(args.gen)
    report.add_input(ref_path)
    report.add_input(gen_path)
    report.seeds["sampling"] = args.seed
    ref, gen = load_obj(ref_path), load_obj(gen_path)
    with report.timed("geometry"):
        geo = topology.geo_score(ref, gen, args.points, args.seed)
    with report.timed("topology"):
        topo = topology.topo_score(gen, None, args.up_axis, args.mode)
    out = {"cd": geo.chamfer, "hd": geo.hausdorff, "qr": geo.quad_ratio}
    out.update(topo.summary())
    report.outputs = out
    if args.out:
        _write_json(args.resolve(args.out), out)
    return EXIT_OK


# pair / tdpo-eval


def _read_candidate_tokens(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".obj":
        return codec.encode_mesh(load_obj(path))
    return codec.read_tokens(path)


def candidate_files(cond_dir: Path) -> list[Path]:
    if not cond_dir.is_dir():
        raise FileNotFoundError(f"candidate directory not found: {cond_dir}")
    return sorted(p for p in cond_dir.iterdir() if p.is_file() and (p.suffix.lower() == ".obj" or p.suffix.lower() in TOKEN_SUFFIXES))


def _score_candidate(job):
    cond, path, up_axis, mode, cfg = job
    cand = preference.Candidate.from_tokens(cond, path.name, _read_candidate_tokens(path), up_axis, mode)
    verdict = run_filter(cand.mesh, cfg).as_dict() if cfg is not None else None
    return cand, verdict


def _collect_candidates(conditions: dict[str, Path], report: RunReport, jobs: int, up_axis: str, mode: str, cfg):
    jobs_list = []
    for cond in sorted(conditions):
        for p in candidate_files(conditions[cond]):
            report.add_input(p)
            jobs_list.append((cond, p, up_axis, mode, cfg))
    results = _map(_score_candidate, jobs_list, jobs)
    kept: dict[str, list] = {c: [] for c in sorted(conditions)}
    rejected = []
    for (cond, p, *_), (cand, verdict) in zip(jobs_list, results):
        if verdict is not None and not verdict["passed"]:
            rejected.append({"condition": cond, "candidate": p.name, "failed_rules": verdict["failed_rules"]})
            continue
        kept[cond].append(cand)
    return kept, rejected


def _condition_dirs(root: Path) -> dict[str, Path]:
    if not root.is_dir():
        raise FileNotFoundError(f"candidate directory not found: {root}")
    return {p.name: p for p in sorted(root.iterdir()) if p.is_dir()}


def _build_pairs(kept, tau, per_condition, seed, out_dir: Path, report: RunReport) -> dict:
    usable = {c: v for c, v in kept.items() if len(v) >= 2}
    for c in sorted(set(kept) - set(usable)):
        report.warnings.append(f"condition {c} has fewer than 2 candidates; skipped")
    ds = preference.build_dataset(usable, tau, per_condition, seed)
    manifest = preference.write_dataset(ds, out_dir)
    return {"manifest": report.rel(manifest), "pairs": len(ds.pairs), "stats": ds.stats}


def cmd_pair(args, report: RunReport) -> int:
    report.seeds["windows"] = args.seed
    conditions = _condition_dirs(args.resolve(args.candidates))
    with report.timed("score"):
        kept, _ = _collect_candidates(conditions, report, args.jobs, args.up_axis, args.mode, None)
    with report.timed("pair"):
        report.outputs = _build_pairs(kept, args.tau, args.pairs_per_condition, args.seed, args.resolve(args.out), report)
    for w in report.warnings:
        _warn(w)
    return EXIT_OK


def logprob_path(directory: Path, pid: str, stream: str) -> Path:
    return directory / f"{pid}.{stream}.txt"


def evaluate_tdpo(manifest_path: Path, logprob_dir: Path, beta: float, report: RunReport | None = None) -> dict:
    entries = preference.read_manifest(manifest_path)
    per_pair = []
    windows = []
    for e in entries:
        streams = {}
        for s in LOGPROB_STREAMS:
            path = logprob_path(logprob_dir, e["id"], s)
            if report is not None:
                report.add_input(path)
            streams[s] = tdpo.read_logprob_file(path)
        windows.append(tdpo.WindowLogProbs(beta=beta, **streams))
    if not windows:
        return {"loss": None, "per_pair": []}
    mean, results = tdpo.batch_loss(windows)
    for e, r in zip(entries, results):
        per_pair.append({"id": e["id"], "z": r.margin, "loss": r.loss, "prob": r.preference_prob})
    return {"loss": mean, "per_pair": per_pair}


def cmd_tdpo_eval(args, report: RunReport) -> int:
    manifest = args.resolve(args.pairs)
    report.add_input(manifest)
    with report.timed("tdpo"):
        out = evaluate_tdpo(manifest, args.resolve(args.logprobs), args.beta, report)
    report.outputs = out
    if args.out:
        _write_json(args.resolve(args.out), out)
    return EXIT_OK


# toy model


def _parse_dims(text: str) -> tuple[int, int, int]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--dims expects three comma-separated integers, got {text!r}") from None
    if len(dims) != 3:
        raise UsageError(f"--dims expects three comma-separated integers, got {text!r}")
    return dims


def _toy_model(args, seed: int) -> hourglass.HourglassLM:
    if args.weights:
        return hourglass.HourglassLM.load(args.resolve(args.weights))
    dims = _parse_dims(args.dims)
    heads = tuple(max(1, d // 16) for d in dims)
    cfg = hourglass.HourglassConfig(dims=dims, heads=heads, max_len=args.l, seed=seed)
    return hourglass.HourglassLM(cfg)


def _toy_condition(args, model: hourglass.HourglassLM, report: RunReport) -> hourglass.ConditionSpec:
    dim = model.cfg.shape_dim
    if args.shape:
        path = args.resolve(args.shape)
        report.add_input(path)
        cloud = sample_point_cloud(normalize(load_obj(path)), 2048, noise_scale=0.0, seed=args.seed)
        emb = hourglass.stub_shape_encoder(cloud, dim, args.seed)
    else:
        emb = np.zeros(dim)
    return hourglass.ConditionSpec(emb, args.r)


def cmd_toy(args, report: RunReport) -> int:
    report.seeds["model"] = args.seed
    model = _toy_model(args, args.seed)
    cond = _toy_condition(args, model, report)
    if args.save_weights:
        model.save(args.resolve(args.save_weights))
    if args.action == "forward":
        src = args.resolve(args.tokens)
        report.add_input(src)
        toks = codec.read_tokens(src)
        with report.timed("forward"):
            logits, shapes = model.forward(toks, cond, return_hidden=True)
        out = {"logits_shape": list(logits.shape), "stages": {k: list(v) for k, v in shapes.items()}}
        if len(toks) >= 2:
            out["next_token_loss"] = hourglass.next_token_loss(logits, toks)
        if args.out:
            dst = args.resolve(args.out)
            dst.parent.mkdir(parents=True, exist_ok=True)
            with open(dst, "wb") as fh:
                np.save(fh, logits.astype("<f8"))
            out["logits_file"] = report.rel(dst)
        report.outputs = out
    elif args.action == "generate":
        sampler = hourglass.SamplerConfig(args.k, args.p, args.t, args.sample_seed if args.sample_seed is not None else args.seed)
        report.seeds["sampler"] = sampler.seed
        prefix = [codec.BOS]
        if args.prefix:
            src = args.resolve(args.prefix)
            report.add_input(src)
            prefix = [int(t) for t in codec.read_tokens(src)]
        max_tokens = args.max_tokens or model.cfg.max_len
        with report.timed("generate"):
            seq = hourglass.generate(model, prefix, cond, sampler, max_tokens)
        _, diag = codec.detokenize(seq, "lenient")
        dst = args.resolve(args.out)
        dst.parent.mkdir(parents=True, exist_ok=True)
        codec.write_tokens(dst, seq, args.format)
        report.outputs = {"tokens": report.rel(dst), "n_tokens": int(len(seq)), "decode": diag.as_dict()}
    else:
        if args.ref_seed is None:
            raise UsageError("toy logprobs needs --ref-seed")
        report.seeds["reference"] = args.ref_seed
        ref_model = _toy_model(args, args.ref_seed) if not args.weights else model
        manifest = args.resolve(args.pairs)
        report.add_input(manifest)
        out_dir = args.resolve(args.out)
        with report.timed("logprobs"):
            written = write_pair_logprobs(manifest, out_dir, model, ref_model, cond)
        report.outputs = {"logprobs": report.rel(out_dir), "pairs": written}
    return EXIT_OK


def write_pair_logprobs(manifest: Path, out_dir: Path, policy, reference, cond) -> int:
    """Per-token log-probs of every window under both models, one text file per stream.

    Windows are scored as stand-alone sequences (offset 0, preceded by BOS).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = preference.read_manifest(manifest)
    base = manifest.parent
    for e in entries:
        for side, key in (("w", "winner_file"), ("l", "loser_file")):
            toks = codec.read_tokens(base / e[key])
            for model, name in ((policy, "policy"), (reference, "ref")):
                lp = hourglass.window_logprobs(model, toks, 0, len(toks), cond)
                tdpo.write_logprob_file(logprob_path(out_dir, e["id"], f"{name}_{side}"), lp)
    return len(entries)


# pipeline


def _load_config(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def cmd_pipeline(args, report: RunReport) -> int:
    cfg_path = args.resolve(args.config)
    report.add_input(cfg_path)
    try:
        conf = _load_config(cfg_path)
    except (ValueError, KeyError) as exc:
        raise StageError("config", exc) from exc
    rel = args.resolve
    try:
        seed = int(conf["seed"])
        tau = int(conf["tau"])
        per_condition = int(conf.get("pairs_per_condition", 4))
        out_dir = rel(conf.get("out", "pipeline_out"))
        conditions = {str(k): rel(v) for k, v in conf["conditions"].items()}
        filter_cfg = FilterConfig.from_dict(conf.get("filter", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise StageError("config", exc) from exc
    report.seeds["windows"] = seed
    up_axis = conf.get("up_axis", "y")
    mode = conf.get("mode", "bidirectional")

    try:
        with report.timed("filter+score"):
            kept, rejected = _collect_candidates(conditions, report, args.jobs, up_axis, mode, filter_cfg)
    except Exception as exc:
        raise StageError("score", exc) from exc
    n_kept = sum(len(v) for v in kept.values())
    if n_kept == 0:
        report.warnings.append("every candidate was filtered out; manifest is empty")
    try:
        with report.timed("pair"):
            pairs = _build_pairs(kept, tau, per_condition, seed, out_dir, report)
    except Exception as exc:
        raise StageError("pair", exc) from exc
    report.outputs = {"filter": {"kept": n_kept, "rejected": rejected}, "pair": pairs}

    toy = conf.get("tdpo")
    if toy is not None and pairs["pairs"] > 0:
        try:
            with report.timed("tdpo"):
                report.outputs["tdpo"] = _pipeline_tdpo(toy, tau, out_dir, report)
        except Exception as exc:
            raise StageError("tdpo", exc) from exc
    _write_json(out_dir / "pipeline.json", report.outputs)
    for w in report.warnings:
        _warn(w)
    return EXIT_OK


def _pipeline_tdpo(toy: dict, tau: int, out_dir: Path, report: RunReport) -> dict:
    policy_seed, ref_seed = int(toy["policy_seed"]), int(toy["ref_seed"])
    report.seeds["policy"] = policy_seed
    report.seeds["reference"] = ref_seed
    dims = tuple(toy.get("dims", (16, 32, 64)))
    heads = tuple(max(1, d // 16) for d in dims)
    max_len = -(-(tau + codec.BLOCK) // codec.BLOCK) * codec.BLOCK
    policy = hourglass.HourglassLM(hourglass.HourglassConfig(dims=dims, heads=heads, max_len=max_len, seed=policy_seed))
    ref = hourglass.HourglassLM(hourglass.HourglassConfig(dims=dims, heads=heads, max_len=max_len, seed=ref_seed))
    cond = hourglass.ConditionSpec(np.zeros(policy.cfg.shape_dim), float(toy.get("r", 1.0)))
    lp_dir = out_dir / "logprobs"
    manifest = out_dir / "manifest.json"
    write_pair_logprobs(manifest, lp_dir, policy, ref, cond)
    result = evaluate_tdpo(manifest, lp_dir, float(toy.get("beta", tdpo.DEFAULT_BETA)))
    _write_json(out_dir / "tdpo.json", result)
    return {"loss": result["loss"], "pairs": len(result["per_pair"])}


# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadseq", description="Quad-mesh sequence tools.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--root", default=None, help="base directory for relative paths (default: cwd)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for per-file work")
    parser.add_argument("--report", default=None, help="also write the run report to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="OBJ -> token file")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--format", choices=("text", "bin"), default="text")
    p.add_argument("--delimiters", action="store_true", help="wrap with BOS/EOS")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("detokenize", help="token file -> OBJ")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--mode", choices=("strict", "lenient"), default="strict")
    p.set_defaults(func=cmd_detokenize)

    p = sub.add_parser("quadify", help="merge triangle pairs into quads")
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--solver", choices=("auto", "exact", "greedy"), default="auto")
    p.add_argument("--max-angle", type=float, default=tri2quad.DEFAULT_MAX_ANGLE)
    p.set_defaults(func=cmd_quadify)

    p = sub.add_parser("filter", help="quality screen; exit 1 if any input fails")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--config", default=None, help="TOML or JSON filter config")
    p.add_argument("-o", "--out", default=None, help="write verdicts as JSON")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("score", help="geometric and topological metrics")
    p.add_argument("--ref", required=True)
    p.add_argument("--gen", required=True)
    p.add_argument("--points", type=int, default=40960)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--up-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--mode", choices=("bidirectional", "oneway"), default="bidirectional")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pair", help="build preference pairs from per-condition candidate dirs")
    p.add_argument("--candidates", required=True, help="directory with one subdirectory per condition")
    p.add_argument("--tau", type=int, required=True)
    p.add_argument("--pairs-per-condition", type=int, default=4)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--up-axis", choices=("x", "y", "z"), default="y")
    p.add_argument("--mode", choices=("bidirectional", "oneway"), default="bidirectional")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("tdpo-eval", help="truncated DPO loss over a pair manifest")
    p.add_argument("--pairs", required=True, help="manifest.json")
    p.add_argument("--logprobs", required=True, help="directory of <pair_id>.<stream>.txt files")
    p.add_argument("--beta", type=float, default=tdpo.DEFAULT_BETA)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_tdpo_eval)

    p = sub.add_parser("toy", help="random-weight hourglass model")
    p.add_argument("action", choices=("forward", "generate", "logprobs"))
    p.add_argument("--seed", type=int, required=True, help="model weight seed")
    p.add_argument("--l", type=int, default=144, help="max sequence length (multiple of 12)")
    p.add_argument("--dims", default="16,32,64")
    p.add_argument("--r", type=float, default=1.0, help="quad-dominance conditioning in [0, 1]")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--p", type=float, default=0.95)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--sample-seed", type=int, default=None, help="sampler seed (default: --seed)")
    p.add_argument("--weights", default=None, help="load weights from a QGHW file")
    p.add_argument("--save-weights", default=None)
    p.add_argument("--shape", default=None, help="OBJ used for the shape embedding (default: zeros)")
    p.add_argument("--tokens", default=None, help="forward: input token file")
    p.add_argument("--prefix", default=None, help="generate: prefix token file")
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--format", choices=("text", "bin"), default="text")
    p.add_argument("--pairs", default=None, help="logprobs: manifest.json")
    p.add_argument("--ref-seed", type=int, default=None, help="logprobs: reference model seed")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("pipeline", help="filter -> score -> pair -> tdpo from one config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)
    return parser


def _check_args(args) -> None:
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    if args.command == "toy":
        need = {"forward": "tokens", "generate": "out", "logprobs": "pairs"}[args.action]
        if getattr(args, need) is None:
            raise UsageError(f"toy {args.action} needs --{need}")
        if args.action == "logprobs" and args.out is None:
            raise UsageError("toy logprobs needs --out")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    root = Path(args.root) if args.root else Path.cwd()
    args.resolve = lambda p: Path(p) if Path(p).is_absolute() else root / p
    report = RunReport(args.command, root)
    try:
        _check_args(args)
        code = args.func(args, report)
    except UsageError as exc:
        print(f"quadseq: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"quadseq: pipeline {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc.cause, OSError) else EXIT_VALIDATION
    except OSError as exc:
        print(f"quadseq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MeshError, codec.CodecError, ValueError) as exc:
        print(f"quadseq: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    text = _dump(report.as_dict())
    sys.stdout.write(text)
    if args.report:
        Path(args.resolve(args.report)).write_text(text, encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
