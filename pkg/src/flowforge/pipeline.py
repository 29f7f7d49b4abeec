"""Corpus-level stages: transcribe, annotate, expand, refine, filter, score."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from . import gateway as gw
from . import metrics, validator, wfdsl
from .errors import ArgError, BinaryParam, ConfigError, DslParseError, SamplingError, \
    VerdictParseError
from .registry import ApiDoc, ApiRegistry, BUILTIN_APP_ID
from .shortcut import RawShortcut, load_shortcut, scan_binary_params
from .transcriber import DICTIONARY, assign_names, build_ast, emit_code

log = logging.getLogger(__name__)

# Three of these appear as examples in the source material; the rest are
# ordinary app-store style categories. Override through the config file.
DEFAULT_CATEGORIES = (
    "Business", "Health & Fitness", "Productivity", "Education", "Entertainment",
    "Finance", "Food & Drink", "Lifestyle", "Medical", "Music", "Navigation", "News",
    "Photo & Video", "Reference", "Shopping", "Social Networking", "Sports", "Travel",
    "Utilities", "Weather", "Games", "Books", "Developer Tools", "Graphics & Design",
    "Home", "Accessibility", "Communication", "Automation",
)

# Hand-written in-context example shown to the query and refine prompts.
DEFAULT_ICL_CODE = """\
# Ask the user which city to look up
city = input('Which city?')
# Fetch the current forecast for that city
forecast = is_workflow_actions_weather_currentconditions(WFWeatherCustomLocation=city)
# Speak the forecast aloud
is_workflow_actions_speaktext(WFText=forecast)
"""
DEFAULT_ICL_QUERY = "How can I ask for a city name and have my phone read out the weather there?"


@dataclass
class WorkflowSample:
    id: str
    category: str = ""
    query: str = ""
    api_docs: list[str] = field(default_factory=list)
    plan: str = ""
    code: str = ""
    validated: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Any) -> "WorkflowSample":
        if not isinstance(d, dict) or not isinstance(d.get("id"), str):
            raise ArgError("sample records need a string 'id'")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        s = cls(**{k: v for k, v in d.items() if k in known})
        if unknown:
            s.meta = {**s.meta, "extra": {k: d[k] for k in sorted(unknown)}}
        return s

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


# -- corpus io ----------------------------------------------------------------


def read_samples(path: str | Path) -> list[WorkflowSample]:
    """Load a ``.jsonl`` corpus, or a single sample from any other JSON file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() != ".jsonl":
        data = json.loads(text)
        if isinstance(data, list):
            return [WorkflowSample.from_dict(d) for d in data]
        return [WorkflowSample.from_dict(data)]
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(WorkflowSample.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ArgError(f"{path}:{n}: invalid JSON ({exc.msg})") from None
    return out


def dumps_samples(samples: Iterable[WorkflowSample]) -> str:
    return "".join(s.to_json() + "\n" for s in samples)


def write_samples(samples: Sequence[WorkflowSample], path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".jsonl":
        text = dumps_samples(samples)
    elif len(samples) == 1:
        text = json.dumps(samples[0].to_dict(), ensure_ascii=False, indent=2) + "\n"
    else:
        text = json.dumps([s.to_dict() for s in samples], ensure_ascii=False, indent=2) + "\n"
    _write_text(path, text)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def by_id(samples: Iterable[WorkflowSample]) -> list[WorkflowSample]:
    return sorted(samples, key=lambda s: s.id)


# -- configuration --------------------------------------------------------------


@dataclass
class PipelineConfig:
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    n_examples: int = 2
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    allowlist: tuple[str, ...] = tuple(sorted(validator.DEFAULT_ALLOWLIST))
    builtin_app_id: str = BUILTIN_APP_ID
    n_apps_range: tuple[int, int] = (1, 5)
    icl_code: str = DEFAULT_ICL_CODE
    icl_query: str = DEFAULT_ICL_QUERY
    gateway: gw.GatewayConfig = field(default_factory=gw.GatewayConfig)

    @classmethod
    def from_mapping(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        section = data.get("pipeline", {})
        if not isinstance(section, dict):
            raise ConfigError("[pipeline] must be a table")
        for key, value in section.items():
            if key not in cls.__dataclass_fields__ or key == "gateway":
                raise ConfigError(f"unknown pipeline setting {key!r}")
            if key in ("categories", "allowlist", "n_apps_range"):
                value = tuple(value)
            setattr(cfg, key, value)
        if "gateway" in data:
            cfg.gateway = gw.GatewayConfig.from_mapping(data["gateway"])
        if cfg.n_examples < 1:
            raise ConfigError("n_examples must be at least 1")
        if cfg.workers < 1:
            raise ConfigError("workers must be at least 1")
        return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ImportError:  # Python 3.10
                import tomli as tomllib
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except Exception as exc:  # tomli and json raise unrelated types
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return PipelineConfig.from_mapping(data)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    """Apply ``fn`` over ``items`` with a bounded pool, keeping input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- API sampling -----------------------------------------------------------------


@dataclass(frozen=True)
class SamplingConfig:
    n_apis: int
    seed: int = 0
    n_apps_range: tuple[int, int] = (1, 5)
    builtin_app_id: str = BUILTIN_APP_ID

    def __post_init__(self):
        lo, hi = self.n_apps_range
        if not 1 <= lo <= hi <= 5:
            raise ConfigError(f"n_apps_range must lie within [1, 5], got {self.n_apps_range}")
        if self.n_apis < 1:
            raise ConfigError("n_apis must be positive")


@dataclass(frozen=True)
class ApiDraw:
    builtin: tuple[ApiDoc, ...]
    apps: tuple[str, ...]
    third_party: tuple[ApiDoc, ...]
    shortfall: int = 0

    @property
    def docs(self) -> list[ApiDoc]:
        return [*self.builtin, *self.third_party]

    @property
    def ids(self) -> list[str]:
        return [d.id for d in self.docs]


def sample_apis(r: ApiRegistry, cfg: SamplingConfig) -> ApiDraw:
    """Draw ``n//2`` built-in APIs, then the rest from 1-5 randomly chosen apps.

    The chosen apps' APIs are pooled and sampled without replacement; when
    the pool is too small all of it is taken and ``shortfall`` says how many
    are missing.
    """
    rng = random.Random(cfg.seed)
    n_builtin = cfg.n_apis // 2
    builtins = sorted((d for d in r if d.app_id == cfg.builtin_app_id), key=lambda d: d.id)
    if len(builtins) < n_builtin:
        raise SamplingError(f"need {n_builtin} built-in APIs, registry has {len(builtins)}")
    apps = sorted(a for a in r.apps if a and a != cfg.builtin_app_id)
    lo, hi = cfg.n_apps_range
    if len(apps) < lo:
        raise SamplingError(f"need at least {lo} third-party app(s), registry has {len(apps)}")
    drawn_builtin = rng.sample(builtins, n_builtin)
    k = rng.randint(lo, min(hi, len(apps)))
    chosen = sorted(rng.sample(apps, k))
    pool = sorted((d for d in r if d.app_id in chosen), key=lambda d: d.id)
    need = cfg.n_apis - n_builtin
    if len(pool) <= need:
        third = pool
    else:
        third = rng.sample(pool, need)
    return ApiDraw(tuple(drawn_builtin), tuple(chosen), tuple(third), max(0, need - len(pool)))


# -- transcribe -------------------------------------------------------------------


def _called_identifiers(s: RawShortcut) -> list[str]:
    # The dictionary action becomes a literal, not a call.
    return sorted({n.action.identifier for n in build_ast(s).calls()
                   if n.action.identifier != DICTIONARY})


def transcribe_llm(s: RawShortcut, gateway: gw.Gateway, menu_style: str = "match") -> str:
    """Placeholder names ``variableN_`` are sent through the rename prompt."""
    tree = build_ast(s)
    plan = assign_names(tree, pattern="variable{n}_")
    code = emit_code(tree, plan, menu_style)
    if not plan.names:
        return code
    outputs = {n.action.uuid: n.action for n in tree.calls()}
    description = {name: (outputs[u].params.get("CustomOutputName") or outputs[u].identifier)
                   for u, name in plan.names.items()}
    prompt = gw.render("rename", {
        "code": code,
        "description": json.dumps(description, ensure_ascii=False),
        "variables": json.dumps(list(plan.names.values())),
    })
    renamed = gw.parse_rename_map(gateway.ask(prompt))
    external = {u: renamed.get(name, name) for u, name in plan.names.items()}
    return emit_code(tree, assign_names(tree, external), menu_style)


def cmd_transcribe(path: str | Path, registry: ApiRegistry | None = None,
                   rename: str = "deterministic", gateway: gw.Gateway | None = None,
                   sample_id: str | None = None, category: str = "",
                   external_names: dict | None = None) -> WorkflowSample:
    path = Path(path)
    s = load_shortcut(path)
    hits = scan_binary_params(s)
    if hits:
        report = ", ".join(f"action {i} key {k}" for i, k in hits)
        raise BinaryParam(f"{path}: binary parameters present ({report}); sample removed")
    if rename == "llm":
        if gateway is None:
            raise ArgError("--rename llm needs a configured gateway")
        code = transcribe_llm(s, gateway)
    elif rename == "deterministic":
        tree = build_ast(s)
        code = emit_code(tree, assign_names(tree, external_names))
    else:
        raise ArgError(f"unknown rename mode {rename!r}")
    ids = _called_identifiers(s)
    if registry is not None:
        unknown = [i for i in ids if registry.get(i) is None]
        if unknown:
            log.warning("%s: identifiers missing from registry: %s", path, ", ".join(unknown))
    return WorkflowSample(id=sample_id or path.stem, category=category, api_docs=ids, code=code,
                          meta={"source": path.name, "rename": rename})


# -- thoughts (comments -> plan -> query) ------------------------------------------


def annotate_sample(sample: WorkflowSample, gateway: gw.Gateway, cfg: PipelineConfig,
                    force: bool = False) -> WorkflowSample:
    if (sample.plan or sample.query) and not force:
        raise ArgError(f"sample {sample.id} already has a plan or query; pass --force to redo it")
    try:
        wfdsl.parse(sample.code)
    except DslParseError as exc:
        raise DslParseError(f"sample {sample.id}: {exc}", exc.line, exc.column, exc.token) from None
    bare = _strip_comments(sample.code)
    lines = gw.number_lines(bare)
    reply = gateway.ask(gw.render("comment", {
        "code": bare, "lines": json.dumps(lines, ensure_ascii=False)}))
    comments, missing = gw.parse_comment_map(reply, lines)
    commented = gw.interleave_comments(bare, comments)
    plan = gateway.ask(gw.render("plan", {"code": commented})).strip()
    query = gateway.ask(gw.render("query", {
        "ICL_code": cfg.icl_code, "ICL_query": cfg.icl_query, "code": commented})).strip()
    meta = dict(sample.meta)
    if missing:
        meta["uncommented_lines"] = missing
    return WorkflowSample(sample.id, sample.category, query, list(sample.api_docs), plan,
                          commented, sample.validated, meta)


def _strip_comments(code: str) -> str:
    """Drop full-line comments so the line numbering covers statements only."""
    kept = [l for l in code.splitlines() if l.strip() and not l.lstrip().startswith("#")]
    return "".join(l + "\n" for l in kept)


def cmd_thoughts(samples: Sequence[WorkflowSample], gateway: gw.Gateway, cfg: PipelineConfig,
                 force: bool = False) -> list[WorkflowSample]:
    """All samples or none: any failure aborts the whole run."""
    return by_id(_map(lambda s: annotate_sample(s, gateway, cfg, force), list(samples), cfg.workers))


# -- expansion ----------------------------------------------------------------------


def _format_examples(examples: Sequence[WorkflowSample]) -> str:
    blocks = []
    for ex in examples:
        blocks.append(f"\nquery: {ex.query}\napis: {json.dumps(ex.api_docs)}")
    return "".join(blocks) + "\n"


def cmd_expand(registry: ApiRegistry, corpus: Sequence[WorkflowSample], category: str, n: int,
               seed: int, gateway: gw.Gateway, cfg: PipelineConfig) -> WorkflowSample:
    if category not in cfg.categories:
        raise ArgError(f"category {category!r} is not in the configured category list")
    pool = [s for s in by_id(corpus) if s.query]
    if not pool:
        raise ArgError("expansion needs a corpus with at least one query for in-context examples")
    draw = sample_apis(registry, SamplingConfig(n, seed, cfg.n_apps_range, cfg.builtin_app_id))
    rng = random.Random(f"examples:{seed}")
    examples = rng.sample(pool, min(cfg.n_examples, len(pool)))
    prompt = gw.render("expansion", {
        "examples": _format_examples(examples),
        "apis_string": "\n\n".join(d.to_prompt() for d in draw.docs),
        "category": category,
    })
    query = gateway.ask(prompt).strip()
    meta = {"seed": seed, "apps": list(draw.apps), "examples": [e.id for e in examples]}
    if draw.shortfall:
        meta["shortfall"] = draw.shortfall
    slug = re.sub(r"[^a-z0-9]+", "-", category.lower()).strip("-")
    return WorkflowSample(id=f"expand-{slug}-{seed}", category=category, query=query,
                          api_docs=draw.ids, meta=meta)


# -- refinement ----------------------------------------------------------------------


def _docs_for(sample: WorkflowSample, registry: ApiRegistry | None) -> list[ApiDoc]:
    if registry is None:
        return []
    docs = []
    for api_id in sample.api_docs:
        doc = registry.get(api_id)
        if doc is None:
            log.warning("sample %s: API %s not in registry", sample.id, api_id)
        else:
            docs.append(doc)
    return docs


def refine_sample(sample: WorkflowSample, gateway: gw.Gateway, registry: ApiRegistry | None,
                  cfg: PipelineConfig) -> WorkflowSample:
    if not sample.code or not sample.plan:
        raise ArgError(f"sample {sample.id} needs code and a plan before refinement")
    docs = _docs_for(sample, registry)
    icl = json.dumps({"plan": "1. Ask for a city.\n2. Fetch its forecast.\n3. Speak it.",
                      "code": cfg.icl_code}, ensure_ascii=False)
    prompt = gw.render("refine", {
        "query": sample.query, "thought": sample.plan, "code": sample.code,
        "apis": "\n\n".join(d.to_prompt() for d in docs), "ICL_context": icl,
    })
    reply = gateway.ask(prompt)
    meta = dict(sample.meta)
    try:
        plan, code = gw.parse_refinement(reply)
        wfdsl.parse(code)
    except (ValueError, DslParseError) as exc:
        log.warning("sample %s: refinement rejected (%s); keeping original", sample.id, exc)
        meta["refine"] = f"rejected: {exc}"
        return WorkflowSample(**{**sample.to_dict(), "meta": meta})
    meta["refine"] = "accepted"
    if not code.endswith("\n"):
        code += "\n"
    return WorkflowSample(sample.id, sample.category, sample.query, list(sample.api_docs),
                          plan.strip(), code, False, meta)


def cmd_refine(samples: Sequence[WorkflowSample], gateway: gw.Gateway, registry: ApiRegistry | None,
               cfg: PipelineConfig) -> list[WorkflowSample]:
    return by_id(_map(lambda s: refine_sample(s, gateway, registry, cfg), list(samples), cfg.workers))


# -- validation ------------------------------------------------------------------------


@dataclass
class ValidationSummary:
    n_input: int
    n_output: int
    rejections: dict[str, int]
    rows: list[dict]

    def to_dict(self) -> dict:
        return asdict(self)


def cmd_validate(samples: Sequence[WorkflowSample], registry: ApiRegistry,
                 cfg: PipelineConfig | None = None) -> tuple[list[WorkflowSample], ValidationSummary]:
    cfg = cfg or PipelineConfig()
    survivors, rows = [], []
    rejections: dict[str, int] = {}
    for s in by_id(samples):
        report = validator.validate_code(s.code, _docs_for(s, registry), cfg.allowlist)
        rows.append({"id": s.id, **report.to_dict()})
        if report.passed:
            survivors.append(WorkflowSample(**{**s.to_dict(), "validated": True}))
        for rule in sorted(set(report.rules())):
            rejections[rule] = rejections.get(rule, 0) + 1
    return survivors, ValidationSummary(len(samples), len(survivors), dict(sorted(rejections.items())), rows)


# -- statistics ------------------------------------------------------------------------------


@dataclass
class CorpusStats:
    n_instances: int = 0
    n_apps: int = 0
    n_apis: int = 0
    n_categories: int = 0
    avg_action: float = 0.0
    avg_if: float = 0.0
    avg_loop: float = 0.0
    avg_nested_depth: float = 0.0
    n_unparseable: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _app_of(api_id: str, registry: ApiRegistry | None) -> str:
    doc = registry.get(api_id) if registry is not None else None
    if doc is not None:
        return doc.app_id
    if api_id.startswith(BUILTIN_APP_ID + "."):
        return BUILTIN_APP_ID
    return api_id.rsplit(".", 1)[0]


def cmd_stats(samples: Sequence[WorkflowSample], registry: ApiRegistry | None = None) -> CorpusStats:
    stats = CorpusStats(n_instances=len(samples))
    if not samples:
        return stats
    api_ids = {a for s in samples for a in s.api_docs}
    stats.n_apis = len(api_ids)
    stats.n_apps = len({_app_of(a, registry) for a in api_ids})
    stats.n_categories = len({s.category for s in samples if s.category})
    counted = []
    for s in samples:
        try:
            counted.append(metrics.complexity(s.code))
        except DslParseError:
            stats.n_unparseable += 1
    if counted:
        k = len(counted)
        stats.avg_action = math.fsum(c.n_actions for c in counted) / k
        stats.avg_if = math.fsum(c.n_if for c in counted) / k
        stats.avg_loop = math.fsum(c.n_loop for c in counted) / k
        stats.avg_nested_depth = math.fsum(c.nested_depth for c in counted) / k
    return stats


# -- scoring ----------------------------------------------------------------------------------

SCORE_COLUMNS = ("bleu", "weighted_ngram", "ast_match", "dataflow_match", "codebleu")


@dataclass
class ScoreResult:
    rows: list[tuple[str, metrics.MetricReport]]
    mean: dict[str, float]
    unpaired: list[str]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id",) + SCORE_COLUMNS)
        for sid, r in self.rows:
            w.writerow([sid] + [f"{getattr(r, c):.6f}" for c in SCORE_COLUMNS])
        w.writerow(["mean"] + [f"{self.mean[c]:.6f}" for c in SCORE_COLUMNS])
        return buf.getvalue()


def cmd_score(candidates: Sequence[WorkflowSample], references: Sequence[WorkflowSample],
              weights: Sequence[float] = metrics.DEFAULT_WEIGHTS) -> ScoreResult:
    """Pair samples by id and score each candidate against its reference."""
    weights = metrics.check_weights(weights)
    refs = {s.id: s for s in references}
    cands = {s.id: s for s in candidates}
    paired = sorted(set(refs) & set(cands))
    unpaired = sorted(set(refs) ^ set(cands))
    if not paired:
        raise ArgError("no candidate/reference pairs share an id")
    rows = [(i, metrics.codebleu(cands[i].code, refs[i].code, weights)) for i in paired]
    mean = {c: math.fsum(getattr(r, c) for _, r in rows) / len(rows) for c in SCORE_COLUMNS}
    return ScoreResult(rows, mean, unpaired)


# -- pass rate and agreement --------------------------------------------------------------------


@dataclass
class PassRateResult:
    rate: float
    verdicts: list[dict]

    @property
    def flagged(self) -> list[str]:
        return [v["id"] for v in self.verdicts if v["flagged"]]


def evaluate_sample(sample: WorkflowSample, gateway: gw.Gateway, registry: ApiRegistry | None) -> dict:
    docs = _docs_for(sample, registry)
    apis = [d.function_name for d in docs] if docs or registry is not None else \
        [a.replace(".", "_") for a in sample.api_docs]
    prompt = gw.render("evaluator", {"query": sample.query, "apis": json.dumps(apis),
                                     "code": sample.code})
    reply = gateway.ask(prompt, temperature=0.0)
    try:
        verdict = gw.parse_verdict(reply)
    except VerdictParseError:
        return {"id": sample.id, "pass": False, "flagged": True, "rationale": reply}
    return {"id": sample.id, "pass": verdict.passed, "flagged": False, "rationale": verdict.rationale}


def cmd_passrate(samples: Sequence[WorkflowSample], gateway: gw.Gateway, registry: ApiRegistry | None,
                 cfg: PipelineConfig) -> PassRateResult:
    if not samples:
        raise ArgError("pass rate of an empty corpus is undefined")
    verdicts = _map(lambda s: evaluate_sample(s, gateway, registry), by_id(samples), cfg.workers)
    rate = sum(v["pass"] for v in verdicts) / len(verdicts)
    return PassRateResult(rate, verdicts)


def read_verdicts(path: str | Path) -> dict[str, bool]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            out[str(row["id"])] = bool(row["pass"])
    return out


def cmd_agreement(a: dict[str, bool], b: dict[str, bool]) -> tuple[float, int]:
    """Agreement over ids present in both label sets, and how many were compared."""
    shared = sorted(set(a) & set(b))
    return metrics.agreement_rate([a[i] for i in shared], [b[i] for i in shared]), len(shared)


__all__ = [
    "ApiDraw", "CorpusStats", "PassRateResult", "PipelineConfig", "SamplingConfig", "ScoreResult",
    "ValidationSummary", "WorkflowSample", "cmd_agreement", "cmd_expand", "cmd_passrate",
    "cmd_refine", "cmd_score", "cmd_stats", "cmd_thoughts", "cmd_transcribe", "cmd_validate",
    "load_config", "read_samples", "read_verdicts", "sample_apis", "write_samples",
]
