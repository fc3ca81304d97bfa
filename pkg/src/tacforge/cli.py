"""Batch pipeline commands: mine, validate, generalize, index, prove, bench.

Commands communicate through a fixed output directory layout so each stage
can run on its own or under the bench orchestrator:

    out/candidates/      mined candidate tactics
    out/validity/        compile-check results and the surviving candidates
    out/generalization/  per-unit trial reports and the kept set
    out/index/           the persisted retrieval index
    out/proofs/          per-goal search results and trace events
    out/reports/         tables (CSV) and figures (PNG)

Exit codes: 0 success, 1 internal failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime
import json
import logging
import sys
import traceback
from dataclasses import dataclass
from pathlib import Path

from . import bridge as bridge_mod
from . import mining, reports, retrieval, validate as validate_mod
from .corpus import TheoremRecord, load_corpus, load_units, save_units, split_units
from .kernel import default_signature
from .search import KernelAtp, SearchConfig, solve
from .validate import (
    DisjointnessViolation,
    GeneralizationReport,
    filter_generalizable,
    generalization_rate,
    package_plugin,
)

log = logging.getLogger("tacforge")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    corpus: Path | None = None
    validation_corpus: Path | None = None
    eval_corpus: Path | None = None
    out: Path = Path("out")
    model: str = "toy-llm"
    cassette: Path | None = None
    mode: str = "live"  # "record" | "replay" | "live"
    endpoint: str | None = None
    k: int = 20
    atp_timeout: float = 20.0
    prove_timeout: float = 600.0
    depth_cap: int = 5
    max_repairs: int = 3
    min_rate: float = 0.10
    max_rate_exclusive: float = 1.0
    skip_analysis: bool = False
    skip_generalization: bool = False
    skip_gen_testing: bool = False
    checker_cmd: str | None = None
    jobs: int = 1

    def check(self) -> None:
        if self.min_rate >= self.max_rate_exclusive:
            raise ConfigError("--min-rate must be below --max-rate-exclusive")
        if self.mode == "replay" and self.endpoint:
            raise ConfigError("replay mode forbids a live endpoint")
        if self.mode in ("replay", "record") and self.cassette is None:
            raise ConfigError(f"{self.mode} mode needs --cassette")
        if self.k < 1:
            raise ConfigError("--k must be at least 1")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        for name, value in (("--atp-timeout-secs", self.atp_timeout), ("--prove-timeout-secs", self.prove_timeout)):
            if value <= 0:
                raise ConfigError(f"{name} must be positive")


class OutputLayout:
    def __init__(self, out: Path):
        self.out = Path(out)
        self.candidates_dir = self.out / "candidates"
        self.validity_dir = self.out / "validity"
        self.generalization_dir = self.out / "generalization"
        self.index_dir = self.out / "index"
        self.proofs_dir = self.out / "proofs"
        self.reports_dir = self.out / "reports"
        self.plugins_dir = self.out / "plugins"

    def ensure(self) -> None:
        for d in (
            self.candidates_dir,
            self.validity_dir,
            self.generalization_dir,
            self.index_dir,
            self.proofs_dir,
            self.reports_dir,
            self.plugins_dir,
        ):
            d.mkdir(parents=True, exist_ok=True)

    @property
    def candidates_file(self) -> Path:
        return self.candidates_dir / "candidates.jsonl"

    @property
    def validity_file(self) -> Path:
        return self.validity_dir / "validity.jsonl"

    @property
    def valid_candidates_file(self) -> Path:
        return self.validity_dir / "valid_candidates.jsonl"

    @property
    def reports_file(self) -> Path:
        return self.generalization_dir / "reports.jsonl"

    @property
    def kept_file(self) -> Path:
        return self.generalization_dir / "kept.jsonl"

    @property
    def index_file(self) -> Path:
        return self.index_dir / "tactics.tfidx"

    @property
    def prove_results_file(self) -> Path:
        return self.proofs_dir / "results.jsonl"

    @property
    def trace_file(self) -> Path:
        return self.proofs_dir / "trace.jsonl"


def _load_corpus_checked(path: Path | None, what: str) -> list[TheoremRecord]:
    if path is None:
        raise ConfigError(f"missing {what} path")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return load_corpus(path)


def build_transport(cfg: RunConfig) -> mining.LlmTransport:
    if cfg.mode == "replay":
        if not Path(cfg.cassette).is_file():
            raise ConfigError(f"cassette not found: {cfg.cassette}")
        return mining.CassetteReplayer(cfg.cassette)
    if cfg.endpoint is None:
        raise ConfigError("live transport needs --endpoint (or use --replay with --cassette)")
    live = mining.HttpChatTransport(cfg.endpoint, max_inflight=max(cfg.jobs, 1))
    if cfg.mode == "record":
        return mining.CassetteRecorder(live, cfg.cassette)
    return live


def build_checker(cfg: RunConfig, layout: OutputLayout):
    if cfg.checker_cmd:
        return bridge_mod.SubprocessBridge(
            cfg.checker_cmd, layout.plugins_dir, default_timeout=cfg.atp_timeout
        )
    return bridge_mod.KernelBridge()


def _write_jsonl(path: Path, records: list[dict]) -> None:
    path.write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in records), encoding="utf-8"
    )


# --- commands -----------------------------------------------------------------


def cmd_mine(cfg: RunConfig) -> int:
    cfg.check()
    corpus = _load_corpus_checked(cfg.corpus, "mining corpus")
    transport = build_transport(cfg)
    layout = OutputLayout(cfg.out)
    layout.ensure()
    flags = mining.StageFlags(cfg.skip_analysis, cfg.skip_generalization)
    candidates = mining.mine_corpus(
        corpus, transport, cfg.model, flags=flags, jobs=cfg.jobs
    )
    mining.save_candidates(candidates, layout.candidates_file)
    print(f"mined {len(candidates)} candidate tactic(s) from {len(corpus)} theorem(s)")
    print(f"candidate store: {layout.candidates_file}")
    return 0


def cmd_validate(cfg: RunConfig) -> int:
    cfg.check()
    layout = OutputLayout(cfg.out)
    layout.ensure()
    if not layout.candidates_file.is_file():
        raise ConfigError(f"no candidate store at {layout.candidates_file}; run mine first")
    candidates = mining.load_candidates(layout.candidates_file)
    transport = build_transport(cfg)
    checker = build_checker(cfg, layout)
    results = [
        validate_mod.check_validity(c, checker, transport, cfg.model, cfg.max_repairs)
        for c in candidates
    ]
    validate_mod.save_validity_results(results, layout.validity_file)
    valid = []
    by_id = {c.candidate_id: c for c in candidates}
    for r in results:
        if r.valid:
            valid.append(dataclasses.replace(by_id[r.candidate_id], source_text=r.final_source))
    mining.save_candidates(valid, layout.valid_candidates_file)
    print(f"valid {len(valid)}/{len(candidates)} candidate(s)")
    return 0


def cmd_generalize(cfg: RunConfig) -> int:
    cfg.check()
    layout = OutputLayout(cfg.out)
    layout.ensure()
    if not layout.valid_candidates_file.is_file():
        raise ConfigError(f"no valid candidates at {layout.valid_candidates_file}; run validate first")
    valid = mining.load_candidates(layout.valid_candidates_file)
    mined_count = 0
    if layout.candidates_file.is_file():
        mined_count = len(mining.load_candidates(layout.candidates_file))
    mining_corpus = _load_corpus_checked(cfg.corpus, "mining corpus")
    mining_ids = {r.id for r in mining_corpus}

    units = []
    for candidate in valid:
        units.extend(
            split_units(
                candidate.source_text,
                candidate.source_theorem_id,
                strategies=candidate.strategy.description,
                id_prefix=candidate.candidate_id,
            )
        )

    if cfg.skip_gen_testing:
        kept = units
        gen_reports: list[GeneralizationReport] = []
    else:
        validation = _load_corpus_checked(cfg.validation_corpus, "validation corpus")
        overlap = mining_ids & {r.id for r in validation}
        if overlap:
            raise DisjointnessViolation(
                f"validation corpus shares theorem ids with the mining corpus: {sorted(overlap)[:3]}"
            )
        checker = build_checker(cfg, layout)
        gen_reports = [
            generalization_rate(
                u, validation, checker, jobs=cfg.jobs, mining_ids=mining_ids
            )
            for u in units
        ]
        kept = filter_generalizable(gen_reports, units, cfg.min_rate, cfg.max_rate_exclusive)

    validate_mod.save_reports(gen_reports, layout.reports_file)
    rates = {r.unit_id: r.rate for r in gen_reports}
    save_units(kept, layout.kept_file, rates=rates)
    reports.write_histogram(
        gen_reports,
        layout.reports_dir / "histogram.csv",
        layout.reports_dir / "histogram.png",
    )
    reports.write_stage_counts(
        mined_count, len(valid), len(kept), layout.reports_dir / "stage_counts.csv"
    )
    if cfg.skip_gen_testing:
        print(f"kept all {len(kept)} unit(s) (generalization testing skipped)")
    else:
        print(f"kept {len(kept)}/{len(units)} unit(s) in band [{cfg.min_rate}, {cfg.max_rate_exclusive})")
    return 0


def cmd_index(cfg: RunConfig) -> int:
    cfg.check()
    layout = OutputLayout(cfg.out)
    layout.ensure()
    if not layout.kept_file.is_file():
        raise ConfigError(f"no kept set at {layout.kept_file}; run generalize first")
    kept = load_units(layout.kept_file)
    corpus = _load_corpus_checked(cfg.corpus, "mining corpus")
    index = retrieval.build_index(kept, corpus)
    retrieval.save_index(index, layout.index_file)
    print(f"indexed {len(index.documents)} theorem(s) covering {len(kept)} tactic unit(s)")
    return 0


def cmd_prove(cfg: RunConfig) -> int:
    cfg.check()
    layout = OutputLayout(cfg.out)
    layout.ensure()
    eval_records = _load_corpus_checked(cfg.eval_corpus, "evaluation corpus")
    if not layout.kept_file.is_file():
        raise ConfigError(f"no kept set at {layout.kept_file}; run generalize first")
    kept = load_units(layout.kept_file)
    if layout.index_file.is_file():
        index = retrieval.load_index(layout.index_file)
    else:
        corpus = _load_corpus_checked(cfg.corpus, "mining corpus")
        index = retrieval.build_index(kept, corpus)
        retrieval.save_index(index, layout.index_file)

    sig = default_signature()
    checker = build_checker(cfg, layout)
    for unit in kept:
        checker.load_artifact(package_plugin(unit))
    atp = KernelAtp(sig)
    search_cfg = SearchConfig(
        k=cfg.k,
        atp_timeout=cfg.atp_timeout,
        total_timeout=cfg.prove_timeout,
        depth_cap=cfg.depth_cap,
    )

    results: list[dict] = []
    trace_records: list[dict] = []
    baseline_solved = 0
    solved = 0
    elapsed = 0.0
    for record in eval_records:
        if record.parsed_goal is None:
            results.append(
                {
                    "goal_id": record.id,
                    "name": record.name,
                    "baseline_solved": False,
                    "solved": False,
                    "proof_script": None,
                    "error": "statement does not parse under the kernel signature",
                    "stats": {"nodes_expanded": 0, "atp_calls": 0, "tactic_applications": 0},
                }
            )
            continue
        goal = record.parsed_goal
        base = atp(goal, cfg.atp_timeout) is not None
        trace = lambda event, goal_id=record.id: trace_records.append({"goal_id": goal_id, **event})
        outcome = solve(goal, index, atp, checker, search_cfg, trace=trace)
        baseline_solved += int(base)
        solved += int(outcome.solved)
        elapsed += outcome.stats.wall_time
        results.append(
            {
                "goal_id": record.id,
                "name": record.name,
                "baseline_solved": base,
                "solved": outcome.solved,
                "proof_script": outcome.proof_script,
                "stats": {
                    "nodes_expanded": outcome.stats.nodes_expanded,
                    "atp_calls": outcome.stats.atp_calls,
                    "tactic_applications": outcome.stats.tactic_applications,
                },
            }
        )

    _write_jsonl(layout.prove_results_file, results)
    _write_jsonl(layout.trace_file, trace_records)
    suite = Path(cfg.eval_corpus).stem
    summary = [
        {
            "suite": suite,
            "goals": len(eval_records),
            "atp_only": baseline_solved,
            "with_tactics": solved,
        }
    ]
    reports.write_prove_summary(
        summary, layout.reports_dir / "prove_summary.csv", layout.reports_dir / "prove_summary.png"
    )
    stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    (layout.proofs_dir / "timing.txt").write_text(
        f"{reports.GENERATED_PREFIX} {stamp} search_wall_time={elapsed:.3f}s\n", encoding="utf-8"
    )
    print(f"proved {solved}/{len(eval_records)} goal(s); hook alone proved {baseline_solved}")
    return 0


def _stage_counts(layout: OutputLayout) -> dict:
    mined = len(mining.load_candidates(layout.candidates_file)) if layout.candidates_file.is_file() else 0
    valid = (
        len(mining.load_candidates(layout.valid_candidates_file))
        if layout.valid_candidates_file.is_file()
        else 0
    )
    kept = len(load_units(layout.kept_file)) if layout.kept_file.is_file() else 0
    return {"mined": mined, "valid": valid, "generalizable": kept}


def _prove_summary_counts(layout: OutputLayout) -> tuple[int, int, int]:
    goals = 0
    base = 0
    solved = 0
    for line in layout.prove_results_file.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        goals += 1
        base += int(record["baseline_solved"])
        solved += int(record["solved"])
    return goals, base, solved


def cmd_bench(cfg: RunConfig) -> int:
    cfg.check()
    layout = OutputLayout(cfg.out)
    layout.ensure()

    def run_variant(name: str, **overrides) -> OutputLayout:
        fields = {
            "out": cfg.out / name,
            "skip_analysis": False,
            "skip_generalization": False,
            "skip_gen_testing": False,
        }
        fields.update(overrides)
        sub = dataclasses.replace(cfg, **fields)
        sub_layout = OutputLayout(sub.out)
        print(f"--- pipeline variant: {name}")
        cmd_mine(sub)
        cmd_validate(sub)
        cmd_generalize(sub)
        cmd_index(sub)
        cmd_prove(sub)
        return sub_layout

    full = run_variant("full")
    ablation_rows = [{"variant": "full", **_stage_counts(full)}]
    if cfg.skip_analysis:
        variant = run_variant("no_nl_analysis", skip_analysis=True)
        ablation_rows.append({"variant": "no_nl_analysis", **_stage_counts(variant)})
    if cfg.skip_generalization:
        variant = run_variant("no_nl_generalization", skip_generalization=True)
        ablation_rows.append({"variant": "no_nl_generalization", **_stage_counts(variant)})
    reports.write_mining_ablation(
        ablation_rows,
        layout.reports_dir / "mining_ablation.csv",
        layout.reports_dir / "mining_ablation.png",
    )

    if cfg.skip_gen_testing:
        variant = run_variant("no_gen_testing", skip_gen_testing=True)
        goals, base, full_solved = _prove_summary_counts(full)
        _, _, variant_solved = _prove_summary_counts(variant)
        reports.write_gen_testing_comparison(
            [
                {
                    "suite": Path(cfg.eval_corpus).stem if cfg.eval_corpus else "eval",
                    "goals": goals,
                    "atp_only": base,
                    "with_tactics": full_solved,
                    "without_gen_testing": variant_solved,
                }
            ],
            layout.reports_dir / "gen_testing.csv",
            layout.reports_dir / "gen_testing.png",
        )
    print(f"bench reports: {layout.reports_dir}")
    return 0


# --- argument wiring -------------------------------------------------------------


def _add_common(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    ap.add_argument("--jobs", type=int, default=1, help="worker count for parallel stages")


def _add_transport(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--model", default="toy-llm", help="model id sent with every request")
    ap.add_argument("--cassette", type=Path, default=None, help="cassette file for record/replay")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--replay", action="store_true", help="serve responses from the cassette")
    mode.add_argument("--record", action="store_true", help="record live responses to the cassette")
    ap.add_argument("--endpoint", default=None, help="chat-completion endpoint URL for live runs")


def _add_stage_flags(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--skip-analysis", action="store_true", help="mine without the per-step analysis stage")
    ap.add_argument(
        "--skip-generalization", action="store_true", help="formalize raw analyses without strategy abstraction"
    )


def _add_band(ap: argparse.ArgumentParser) -> None:
    ap.add_argument("--min-rate", type=float, default=0.10, help="keep tactics at or above this rate")
    ap.add_argument(
        "--max-rate-exclusive", type=float, default=1.0, help="discard tactics at or above this rate"
    )


def _add_checker(ap: argparse.ArgumentParser) -> None:
    ap.add_argument(
        "--checker-cmd",
        default=None,
        help="external checker command template with a {script} placeholder; default is the embedded kernel",
    )


def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tacforge", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    mine = sub.add_parser("mine", help="mine candidate tactics from a proof corpus")
    mine.add_argument("--corpus", type=Path, required=False, help="mining corpus (JSONL)")
    _add_transport(mine)
    _add_stage_flags(mine)
    _add_common(mine)

    val = sub.add_parser("validate", help="compile-check candidates with the repair loop")
    _add_transport(val)
    val.add_argument("--max-repairs", type=int, default=3, help="repair rounds before discarding")
    _add_checker(val)
    _add_common(val)

    gen = sub.add_parser("generalize", help="position-insertion trials and band filtering")
    gen.add_argument("--corpus", type=Path, required=False, help="mining corpus (for disjointness)")
    gen.add_argument("--validation-corpus", type=Path, required=False, help="held-out corpus (JSONL)")
    gen.add_argument("--skip-gen-testing", action="store_true", help="keep every valid tactic untested")
    _add_band(gen)
    _add_checker(gen)
    _add_common(gen)

    idx = sub.add_parser("index", help="build the retrieval index over kept tactics")
    idx.add_argument("--corpus", type=Path, required=False, help="mining corpus (JSONL)")
    _add_common(idx)

    prove = sub.add_parser("prove", help="run the tactic-augmented goal search")
    prove.add_argument("--corpus", type=Path, required=False, help="mining corpus (to rebuild the index)")
    prove.add_argument("--eval-corpus", type=Path, required=False, help="goals to prove (JSONL)")
    prove.add_argument("--k", type=int, default=20, help="theorems retrieved per goal")
    prove.add_argument("--atp-timeout-secs", type=float, default=20.0, help="hook timeout per goal")
    prove.add_argument("--prove-timeout-secs", type=float, default=600.0, help="total timeout per goal")
    prove.add_argument("--depth-cap", type=int, default=5, help="maximum goal depth in the search tree")
    _add_checker(prove)
    _add_common(prove)

    bench = sub.add_parser("bench", help="run the whole pipeline plus ablation variants")
    bench.add_argument("--corpus", type=Path, required=False)
    bench.add_argument("--validation-corpus", type=Path, required=False)
    bench.add_argument("--eval-corpus", type=Path, required=False)
    _add_transport(bench)
    _add_stage_flags(bench)
    bench.add_argument("--skip-gen-testing", action="store_true", help="also run the keep-everything variant")
    bench.add_argument("--max-repairs", type=int, default=3)
    bench.add_argument("--k", type=int, default=20)
    bench.add_argument("--atp-timeout-secs", type=float, default=20.0)
    bench.add_argument("--prove-timeout-secs", type=float, default=600.0)
    bench.add_argument("--depth-cap", type=int, default=5)
    _add_band(bench)
    _add_checker(bench)
    _add_common(bench)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    mode = "live"
    if getattr(args, "replay", False):
        mode = "replay"
    elif getattr(args, "record", False):
        mode = "record"
    return RunConfig(
        corpus=getattr(args, "corpus", None),
        validation_corpus=getattr(args, "validation_corpus", None),
        eval_corpus=getattr(args, "eval_corpus", None),
        out=args.out,
        model=getattr(args, "model", "toy-llm"),
        cassette=getattr(args, "cassette", None),
        mode=mode,
        endpoint=getattr(args, "endpoint", None),
        k=getattr(args, "k", 20),
        atp_timeout=getattr(args, "atp_timeout_secs", 20.0),
        prove_timeout=getattr(args, "prove_timeout_secs", 600.0),
        depth_cap=getattr(args, "depth_cap", 5),
        max_repairs=getattr(args, "max_repairs", 3),
        min_rate=getattr(args, "min_rate", 0.10),
        max_rate_exclusive=getattr(args, "max_rate_exclusive", 1.0),
        skip_analysis=getattr(args, "skip_analysis", False),
        skip_generalization=getattr(args, "skip_generalization", False),
        skip_gen_testing=getattr(args, "skip_gen_testing", False),
        checker_cmd=getattr(args, "checker_cmd", None),
        jobs=args.jobs,
    )


COMMANDS = {
    "mine": cmd_mine,
    "validate": cmd_validate,
    "generalize": cmd_generalize,
    "index": cmd_index,
    "prove": cmd_prove,
    "bench": cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ap = build_arg_parser()
    args = ap.parse_args(argv)
    cfg = config_from_args(args)
    try:
        return COMMANDS[args.command](cfg)
    except (ConfigError, DisjointnessViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except mining.CassetteMiss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
