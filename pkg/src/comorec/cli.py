"""Command-line interface: ``synth``, ``train`` and ``eval``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .core import DataError, ModelFileError, NumericError
from .ingest import DEFAULT_EXCLUDED_CATEGORIES, load_diagnoses, load_notes
from .models import TrainConfig, load_model, save_model
from .notes_nlp import Lexicon, default_lexicon, load_lexicon
from .pipeline import DataConfig, evaluate, fit, prepare_dataset
from .synthetic import SyntheticConfig, write_dataset

log = logging.getLogger("comorec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    model: str = "ncf"
    diagnoses: Optional[str] = None
    notes: Optional[str] = None
    lexicon: Optional[str] = None
    stopwords: Optional[str] = None
    top_k_codes: Optional[int] = None
    max_notes: Optional[int] = None
    exclude_categories: list[str] = field(default_factory=lambda: sorted(DEFAULT_EXCLUDED_CATEGORIES))
    neg_ratio: int = 4
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    embedding_dim: int = 8
    hidden_sizes: tuple[int, ...] = (64, 32)
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    early_stopping: Optional[int] = None
    k: int = 10
    n_candidates: int = 100
    out: Optional[str] = None
    history: Optional[str] = None

    def data_config(self) -> DataConfig:
        return DataConfig(
            model_kind=self.model,
            neg_ratio=self.neg_ratio,
            seed=self.seed,
            split=tuple(self.split),
            top_k_codes=self.top_k_codes,
            max_notes=self.max_notes,
            excluded_categories=list(self.exclude_categories),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim,
            hidden_sizes=tuple(self.hidden_sizes),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            neg_ratio=self.neg_ratio,
            seed=self.seed,
            early_stopping_patience=self.early_stopping,
        )


def _csv_floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """JSON config file first, then any flag given on the command line."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values)


def _json_dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _lexicon_for(rc: RunConfig) -> Lexicon:
    if rc.lexicon:
        return load_lexicon(rc.lexicon, rc.stopwords)
    return default_lexicon()


def cmd_synth(args) -> int:
    try:
        d = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
        cfg = SyntheticConfig.from_dict(d)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise UsageError(f"bad synthetic config: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    # build in a sibling temp dir so a failure leaves no partial files behind
    with tempfile.TemporaryDirectory(dir=out.parent, prefix=".synth-") as tmp:
        paths = write_dataset(tmp, cfg)
        out.mkdir(parents=True, exist_ok=True)
        for p in paths.values():
            os.replace(p, out / p.name)
    log.info("wrote %s", ", ".join(str(out / p.name) for p in paths.values()))
    return EXIT_OK


def cmd_train(args) -> int:
    rc = _resolve_run_config(args)
    if not rc.diagnoses or not rc.out:
        raise UsageError("train needs --diagnoses and --out")
    if rc.model == "dhf" and not rc.notes:
        raise UsageError("--model dhf requires --notes")
    try:
        dcfg, tcfg = rc.data_config(), rc.train_config()
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    diagnoses = load_diagnoses(rc.diagnoses)
    notes, lexicon = None, None
    if rc.model == "dhf":
        notes = load_notes(rc.notes, rc.exclude_categories, rc.max_notes)
        lexicon = _lexicon_for(rc)
    ds = prepare_dataset(dcfg, diagnoses, notes, lexicon)
    stats = {
        "n_subjects": ds.data.n_subjects,
        "n_codes": ds.data.n_codes,
        "n_symptoms": ds.data.n_symptoms,
        "n_positive": ds.data.n_positive,
        "n_negative": ds.data.n_negative,
        "split_sizes": [len(ds.train), len(ds.validation), len(ds.test)],
        "top_k_coverage": ds.coverage,
    }
    log.info("dataset: %s", stats)
    if ds.coverage is not None:
        log.info("coverage of top-%d codes: %.4f", rc.top_k_codes, ds.coverage)

    extras = {"data_config": dcfg.to_dict(), "train_config": asdict(tcfg)}
    if lexicon is not None:
        extras["lexicon"] = lexicon.to_dict()
    model, history = fit(dcfg, tcfg, ds, extras=extras)
    save_model(model, rc.out)
    history_path = rc.history or str(Path(rc.out).with_suffix(".history.json"))
    _json_dump({"history": history.to_dict(), "dataset": stats}, history_path)
    log.info("saved model to %s and history to %s", rc.out, history_path)
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = _resolve_run_config(args)
    model_path = args.model_file
    if not model_path or not rc.diagnoses or not rc.out:
        raise UsageError("eval needs --model, --diagnoses and --out")
    model = load_model(model_path)
    try:
        dcfg = DataConfig(**model.extras["data_config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{model_path}: missing or invalid data_config ({exc})") from None
    if not {"subject", "code"} <= set(model.encoders):
        raise ModelFileError(f"{model_path}: model file carries no vocabularies")

    diagnoses = load_diagnoses(rc.diagnoses)
    notes, lexicon = None, None
    if model.kind == "dhf":
        if not rc.notes:
            raise UsageError("evaluating a dhf model requires --notes")
        notes = load_notes(rc.notes, dcfg.excluded_categories, dcfg.max_notes)
        lexicon = Lexicon.from_dict(model.extras["lexicon"]) if "lexicon" in model.extras else _lexicon_for(rc)
    ds = prepare_dataset(dcfg, diagnoses, notes, lexicon, encoders=model.encoders)
    report = evaluate(model, ds, k=rc.k, n_candidates=rc.n_candidates, seed=dcfg.seeds()["hit_ratio"])
    report["model_kind"] = model.kind
    report["neg_ratio"] = dcfg.neg_ratio
    _json_dump(report, rc.out)
    log.info(
        "test accuracy=%.4f macro_f1=%.4f auc=%s hit_ratio@%d=%s",
        report["test"]["accuracy"],
        report["test"]["macro_f1"],
        report["test_auc"],
        rc.k,
        report["hit_ratio_at_k"],
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="comorec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic MIMIC-shaped dataset")
    s.add_argument("--config", help="SyntheticConfig JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train an NCF or DHF model")
    t.add_argument("--config", help="RunConfig JSON; flags override its values")
    t.add_argument("--model", choices=("ncf", "dhf"))
    t.add_argument("--diagnoses")
    t.add_argument("--notes")
    t.add_argument("--lexicon", help="term<TAB>kind file (default: bundled lexicon)")
    t.add_argument("--stopwords", help="one stopword per line (default: bundled list)")
    t.add_argument("--top-k-codes", dest="top_k_codes", type=int)
    t.add_argument("--max-notes", dest="max_notes", type=int)
    t.add_argument("--exclude-category", dest="exclude_categories", action="append")
    t.add_argument("--neg-ratio", dest="neg_ratio", type=int, help="negatives per positive (typical: 10, 4, 2)")
    t.add_argument("--seed", type=int)
    t.add_argument("--split", type=_csv_floats, help="train,validation,test fractions")
    t.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    t.add_argument("--hidden-sizes", dest="hidden_sizes", type=_csv_ints)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", dest="batch_size", type=int)
    t.add_argument("--lr", dest="learning_rate", type=float)
    t.add_argument("--early-stopping", dest="early_stopping", type=int, metavar="PATIENCE")
    t.add_argument("--out", help="model JSON path")
    t.add_argument("--history", help="history JSON path (default: <out>.history.json)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a saved model")
    e.add_argument("--config", help="RunConfig JSON; flags override its values")
    e.add_argument("--model", dest="model_file", required=True)
    e.add_argument("--diagnoses")
    e.add_argument("--notes")
    e.add_argument("--lexicon")
    e.add_argument("--stopwords")
    e.add_argument("--k", type=int)
    e.add_argument("--n-candidates", dest="n_candidates", type=int)
    e.add_argument("--out", help="report JSON path")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        _report(args, "usage error", exc)
        return EXIT_USAGE
    except NumericError as exc:
        _report(args, "numeric failure", exc)
        return EXIT_NUMERIC
    except (DataError, ModelFileError, OSError) as exc:
        _report(args, "data error", exc)
        return EXIT_DATA
    except ValueError as exc:
        _report(args, "usage error", exc)
        return EXIT_USAGE


def _origin(exc: BaseException) -> str:
    # innermost package module on the traceback
    name = "cli"
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("comorec."):
            name = mod.split(".", 1)[1]
        tb = tb.tb_next
    return name


def _report(args, kind: str, exc: BaseException) -> None:
    print(f"comorec {args.command}: {kind} [{_origin(exc)}]: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
