"""Training strategies (scratch, pre-train then fine-tune, multi-task), evaluation and run output.

All three strategies perform exactly ``separation_epochs * ceil(n_train / batch_size)``
separation updates; pre-training epochs are extra and never count toward that.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import separator as sep
from .assign import SwitchLog, best_assignment, switch_percentage
from .datagen import Manifest, derive_seed
from .optim import Adam
from .signal import StructuralError, Waveform, si_snr, si_snr_grad, snr
from .ssl_tasks import CcSettings, MaskSpec, Task, make_ssl_example, ssl_loss_and_grad

log = logging.getLogger(__name__)

STRATEGIES = ("scratch", "ptft", "multitask")
EPOCHS_HEADER = ("epoch", "train_loss", "valid_si_snri_db", "switch_pct", "wall_sec")
# forward passes that only score examples use chunks of this many items
EVAL_CHUNK = 32


class ConfigError(ValueError):
    """A run configuration is malformed; the message names the offending field."""


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Strategy:
    kind: str = "scratch"
    task: Optional[Task] = None
    ssl_weight: float = 0.0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ConfigError(f"strategy: unknown kind {self.kind!r}")
        if self.kind != "scratch" and self.task is None:
            raise ConfigError(f"strategy: {self.kind} needs an SSL task")
        if self.kind == "multitask" and not self.ssl_weight > 0:
            raise ConfigError("ssl_weight: must be > 0 for multitask")

    @property
    def label(self) -> str:
        if self.kind == "scratch":
            return "scratch"
        return f"{self.kind}-{self.task.value}"


@dataclass
class RunConfig:
    strategy: str = "scratch"
    ssl_task: str = "SE"
    ssl_weight: float = 0.5
    separation_epochs: int = 60
    pretrain_epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    clip_norm: Optional[float] = None
    seed: int = 0
    n_filters: int = 64
    kernel: int = 16
    hidden: int = 128
    masker_blocks: int = 2
    span_len: int = 7
    mask_prob: float = 0.06
    mask_fill: str = "zero"
    cc_negatives: int = 10
    cc_temperature: float = 0.1
    switch_mode: str = "pass"
    record_wall_time: bool = False
    sep_corpus: str = ""
    ssl_corpus: str = ""
    out_dir: str = ""

    def __post_init__(self):
        self.betas = tuple(self.betas)
        for name in ("separation_epochs", "pretrain_epochs", "batch_size", "n_filters",
                     "kernel", "hidden", "masker_blocks", "span_len", "cc_negatives"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name}: expected a positive integer, got {v!r}")
        for name in ("learning_rate", "adam_eps", "cc_temperature"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{name}: expected a positive number, got {v!r}")
        if self.switch_mode not in ("pass", "online"):
            raise ConfigError(f"switch_mode: expected 'pass' or 'online', got {self.switch_mode!r}")
        if self.kernel % 2:
            raise ConfigError(f"kernel: must be even, got {self.kernel}")
        try:
            Task(self.ssl_task)
            MaskSpec(self.span_len, self.mask_prob, self.mask_fill)
        except (ValueError, StructuralError) as e:
            raise ConfigError(f"ssl settings: {e}") from None
        self.strategy_obj()

    def strategy_obj(self) -> Strategy:
        task = None if self.strategy == "scratch" else Task(self.ssl_task)
        weight = self.ssl_weight if self.strategy == "multitask" else 0.0
        return Strategy(self.strategy, task, weight)

    def model_config(self, n_outputs: int = 2) -> sep.SeparatorConfig:
        return sep.SeparatorConfig(self.n_filters, self.kernel, self.hidden, self.masker_blocks, n_outputs)

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.span_len, self.mask_prob, self.mask_fill)

    def cc_settings(self) -> CcSettings:
        return CcSettings(self.cc_negatives, self.cc_temperature)

    def optimizer(self) -> Adam:
        return Adam(self.learning_rate, self.betas, self.adam_eps, self.clip_norm)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict, allow_zero_weight: bool = False) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        for k in d:
            if k not in names:
                raise ConfigError(f"{k}: unknown config field")
        return cls(**d)


def load_config(path) -> RunConfig:
    """Parse a JSON run config; errors carry line/column or field name."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    try:
        return RunConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(f"{path}: {e}") from None


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_si_snri_db: float
    switch_pct: Optional[float] = None
    wall_sec: float = 0.0
    ssl_loss: Optional[float] = None

    def csv_row(self, with_wall: bool) -> list:
        return [self.epoch, repr(float(self.train_loss)), repr(float(self.valid_si_snri_db)),
                "" if self.switch_pct is None else repr(float(self.switch_pct)),
                repr(round(self.wall_sec, 3)) if with_wall else ""]


@dataclass
class PretrainRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    valid_si_snri_db: float
    wall_sec: float = 0.0


# -- data -----------------------------------------------------------------------

@dataclass
class SepData:
    ids: List[str]
    mix: np.ndarray       # (n, T)
    src: np.ndarray       # (n, 2, T)

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_manifest(cls, manifest: Manifest, split: str) -> "SepData":
        exs = manifest.load_split(split)
        if not exs:
            raise StructuralError(f"separation corpus has no {split!r} examples")
        if any(e.n_sources != 2 for e in exs):
            raise StructuralError("separation corpus must hold 2-source mixtures")
        return cls([e.id for e in exs], np.stack([e.mixture.samples for e in exs]),
                   np.stack([[s.samples for s in e.sources] for e in exs]))


@dataclass
class SslData:
    ids: List[str]
    clean: np.ndarray     # (n, T)
    noise: np.ndarray     # (n, T)
    snr_db: np.ndarray    # (n,)

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_manifest(cls, manifest: Manifest, split: str) -> "SslData":
        recs = manifest.split(split)
        exs = [manifest.load_example(r) for r in recs]
        if not exs:
            raise StructuralError(f"SSL corpus has no {split!r} examples")
        if any(e.n_sources != 1 or e.noise is None for e in exs):
            raise StructuralError("SSL corpus must hold single noised sources")
        return cls([e.id for e in exs], np.stack([e.sources[0].samples for e in exs]),
                   np.stack([e.noise.samples for e in exs]), np.array([r.snr_db for r in recs]))

    def batch(self, idx, task: Task, spec: MaskSpec, kernel: int, seed_parts: tuple):
        inputs, targets, masks = [], [], []
        for i in idx:
            ex = make_ssl_example(task, Waveform(self.clean[i]), Waveform(self.noise[i]),
                                  float(self.snr_db[i]), spec,
                                  derive_seed(*seed_parts, self.ids[i]), kernel)
            inputs.append(ex.input.samples)
            targets.append(ex.target.samples)
            masks.append(ex.frame_mask)
        return np.stack(inputs), np.stack(targets), np.stack(masks)


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def steps_per_epoch(n_train: int, batch_size: int) -> int:
    return math.ceil(n_train / batch_size)


def expected_separation_updates(n_train: int, batch_size: int, epochs: int) -> int:
    return epochs * steps_per_epoch(n_train, batch_size)


# -- separation objective ----------------------------------------------------------

def pairwise_si_snr(out: np.ndarray, src: np.ndarray) -> np.ndarray:
    """``(B, C, C)`` with entry ``[b, i, j] = si_snr(out[b, i], src[b, j])``."""
    return si_snr(out[:, :, None, :], src[:, None, :, :])


def pit_assignments(out: np.ndarray, src: np.ndarray):
    """Best PIT assignment per example under negative SI-SNR, plus the pairwise matrices."""
    mats = -pairwise_si_snr(out, src)
    return [best_assignment(m) for m in mats], mats


def pit_loss_and_grad(params, config, mix: np.ndarray, src: np.ndarray):
    """Mean PIT negative-SI-SNR over a batch, its gradient, and the chosen assignments."""
    out, cache = sep.forward(params, config, mix)
    if not np.all(np.isfinite(out)):
        # the caller turns this into a TrainingDiverged with epoch and step
        return float("nan"), None, []
    assigns, _ = pit_assignments(out, src)
    b, c = out.shape[:2]
    perms = np.array([a.perm for a in assigns])
    ref = src[np.arange(b)[:, None], perms]
    _, g = si_snr_grad(out, ref)
    loss = float(np.mean([a.total_loss / c for a in assigns]))
    grads = sep.backward(params, config, cache, -g / (b * c))
    return loss, grads, assigns


def _chunked_forward(params, config, x: np.ndarray) -> np.ndarray:
    return np.concatenate([sep.forward(params, config, x[i:i + EVAL_CHUNK])[0]
                           for i in range(0, len(x), EVAL_CHUNK)])


def assignment_pass(params, config, data: SepData) -> Dict[str, tuple]:
    """Chosen permutation per training example with frozen parameters."""
    out = _chunked_forward(params, config, data.mix)
    assigns, _ = pit_assignments(out, data.src)
    return {i: a.perm for i, a in zip(data.ids, assigns)}


@dataclass
class EvalResult:
    si_snri: float
    sdri: float
    rows: List[dict] = field(default_factory=list)


def evaluate_outputs(out: np.ndarray, data: SepData) -> EvalResult:
    """Metrics for precomputed outputs ``(n, 2, T)``, paired by best SI-SNR."""
    assigns, _ = pit_assignments(out, data.src)
    rows = []
    for k, a in enumerate(assigns):
        est = out[k][list(np.argsort(a.perm))]        # est[j] is the output paired with source j
        ref = data.src[k]
        mix = data.mix[k]
        si = [float(si_snr(est[j], ref[j]) - si_snr(mix, ref[j])) for j in range(len(ref))]
        sd = [float(snr(est[j], ref[j]) - snr(mix, ref[j])) for j in range(len(ref))]
        rows.append({"example_id": data.ids[k], "perm": a.digits,
                     "si_snri_db": float(np.mean(si)), "sdri_db": float(np.mean(sd))})
    return EvalResult(float(np.mean([r["si_snri_db"] for r in rows])),
                      float(np.mean([r["sdri_db"] for r in rows])), rows)


def evaluate(params, config, data: SepData) -> EvalResult:
    """Mean SI-SNRi and SDRi over ``data``; parameters are not modified."""
    return evaluate_outputs(_chunked_forward(params, config, data.mix), data)


# -- training loops -----------------------------------------------------------------

def _check_finite(value: float, what: str, epoch: int, step: int):
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became {value} at epoch {epoch}, step {step}")


def pretrain(config: RunConfig, ssl_train: SslData, ssl_valid: Optional[SslData] = None,
             task: Optional[Task] = None, callback=None):
    """SSL pre-training of a single-output separator.

    Returns ``(params, [PretrainRecord])``.
    """
    task = Task(task or config.ssl_task)
    cfg1 = config.model_config(1)
    params = sep.init_params(cfg1, config.seed)
    opt = config.optimizer()
    rng = np.random.default_rng([config.seed, 20])
    spec, cc = config.mask_spec(), config.cc_settings()
    records = []
    step = 0
    for epoch in range(1, config.pretrain_epochs + 1):
        t0 = time.perf_counter()
        losses = []
        for idx in _batches(len(ssl_train), config.batch_size, rng):
            x, y, fm = ssl_train.batch(idx, task, spec, config.kernel, ("pt", config.seed, epoch))
            loss, grads = ssl_loss_and_grad(params, cfg1, x, y, fm, task,
                                            derive_seed("cc", config.seed, epoch, step), cc)
            _check_finite(loss, f"{task.value} pre-training loss", epoch, step)
            params = sep.SeparatorParams.from_flat(opt.step(params.flat(), grads.flat()))
            losses.append(loss)
            step += 1
        vl, vs = (np.nan, np.nan)
        if ssl_valid is not None:
            vl, vs = ssl_validation(params, cfg1, ssl_valid, task, config)
        rec = PretrainRecord(epoch, float(np.mean(losses)), vl, vs, time.perf_counter() - t0)
        records.append(rec)
        log.info("pretrain %s epoch %d loss %.5f valid %.5f", task.value, epoch, rec.train_loss, vl)
        if callback:
            callback(rec)
    return params, records


def ssl_validation(params, cfg1, data: SslData, task: Task, config: RunConfig):
    """(mean SSL loss, mean SI-SNRi of the output vs. the clean target) with fixed masks."""
    spec, cc = config.mask_spec(), config.cc_settings()
    losses, gains = [], []
    for i in range(0, len(data), EVAL_CHUNK):
        idx = np.arange(i, min(i + EVAL_CHUNK, len(data)))
        x, y, fm = data.batch(idx, task, spec, config.kernel, ("pt-valid", config.seed))
        loss, _ = ssl_loss_and_grad(params, cfg1, x, y, fm, task, derive_seed("cc-valid", i), cc)
        losses.append(loss * len(idx))
        out = sep.forward(params, cfg1, x)[0][:, 0]
        gains.extend(si_snr(out, y) - si_snr(x, y))
    return float(np.sum(losses) / len(data)), float(np.mean(gains))


@dataclass
class TrainResult:
    params: sep.SeparatorParams
    records: List[EpochRecord]
    switches: SwitchLog
    separation_updates: int
    ssl_head: Optional[dict] = None
    pretrain_records: List[PretrainRecord] = field(default_factory=list)
    initial_params: Optional[sep.SeparatorParams] = None


def train_separation(config: RunConfig, initial_params: Optional[sep.SeparatorParams],
                     train: SepData, valid: SepData, ssl_train: Optional[SslData] = None,
                     pre_cfg: Optional[sep.SeparatorConfig] = None, ssl_weight: float = 0.0,
                     ssl_task: Optional[Task] = None, callback=None) -> TrainResult:
    """PIT training loop shared by all strategies.

    ``initial_params`` (a pre-trained single-output model) goes through
    :func:`transfer_params` first. With ``ssl_train`` set, every separation
    step also draws one SSL batch and adds ``ssl_weight`` times its gradient
    through the shared body (multi-task).
    """
    cfg2 = config.model_config(2)
    cfg1 = config.model_config(1)
    if initial_params is not None:
        params = sep.transfer_params(initial_params, pre_cfg or cfg1, cfg2, config.seed)
    else:
        params = sep.init_params(cfg2, config.seed)
    start_params = params
    multitask = ssl_train is not None
    ssl_head = sep.init_head(cfg1, config.seed, cfg2.n_outputs) if multitask else None
    ssl_task = Task(ssl_task or config.ssl_task)
    spec, cc = config.mask_spec(), config.cc_settings()

    opt = config.optimizer()
    order_rng = np.random.default_rng([config.seed, 10])
    ssl_rng = np.random.default_rng([config.seed, 11])
    ssl_queue: List[np.ndarray] = []
    ssl_pass = 0

    switches = SwitchLog()
    records: List[EpochRecord] = []
    updates = 0
    for epoch in range(1, config.separation_epochs + 1):
        t0 = time.perf_counter()
        losses, ssl_losses = [], []
        online: Dict[str, tuple] = {}
        for idx in _batches(len(train), config.batch_size, order_rng):
            loss, grads, assigns = pit_loss_and_grad(params, cfg2, train.mix[idx], train.src[idx])
            _check_finite(loss, "separation loss", epoch, updates)
            for i, a in zip(idx, assigns):
                online[train.ids[i]] = a.perm
            flat_p, flat_g = params.flat(), grads.flat()
            if multitask:
                if not ssl_queue:
                    ssl_pass += 1
                    ssl_queue = _batches(len(ssl_train), config.batch_size, ssl_rng)
                sidx = ssl_queue.pop(0)
                x, y, fm = ssl_train.batch(sidx, ssl_task, spec, config.kernel, ("mt", config.seed, ssl_pass))
                view = sep.SeparatorParams(params.body, [ssl_head])
                s_loss, s_grads = ssl_loss_and_grad(view, cfg1, x, y, fm, ssl_task,
                                                    derive_seed("cc-mt", config.seed, updates), cc)
                _check_finite(s_loss, "multi-task SSL loss", epoch, updates)
                ssl_losses.append(s_loss)
                for k, g in s_grads.body.items():
                    flat_g[f"body/{k}"] = flat_g[f"body/{k}"] + ssl_weight * g
                for k, v in ssl_head.items():
                    flat_p[f"ssl/{k}"] = v
                    flat_g[f"ssl/{k}"] = ssl_weight * s_grads.heads[0][k]
            new = opt.step(flat_p, flat_g)
            if multitask:
                ssl_head = {k: new.pop(f"ssl/{k}") for k in list(ssl_head)}
            params = sep.SeparatorParams.from_flat(new)
            losses.append(loss)
            updates += 1

        perms = online if config.switch_mode == "online" else assignment_pass(params, cfg2, train)
        for ex_id in train.ids:
            switches.record(epoch, ex_id, perms[ex_id])
        pct = switch_percentage(switches, epoch - 1, epoch) if epoch > 1 else None
        valid_si = evaluate(params, cfg2, valid).si_snri
        rec = EpochRecord(epoch, float(np.mean(losses)), valid_si, pct, time.perf_counter() - t0,
                          float(np.mean(ssl_losses)) if multitask else None)
        records.append(rec)
        log.info("sep epoch %d loss %.4f valid SI-SNRi %.3f switch %s",
                 epoch, rec.train_loss, valid_si, pct)
        if callback:
            callback(rec)
    return TrainResult(params, records, switches, updates, ssl_head, initial_params=start_params)


def train_multitask(config: RunConfig, train: SepData, valid: SepData, ssl_train: SslData,
                    ssl_weight: Optional[float] = None, callback=None) -> TrainResult:
    """Joint PIT + weighted SSL training from scratch (one SSL batch per separation step).

    ``ssl_weight=0`` is accepted here for degenerate-equivalence testing only;
    configs reject it.
    """
    w = config.ssl_weight if ssl_weight is None else ssl_weight
    return train_separation(config, None, train, valid, ssl_train=ssl_train, ssl_weight=w,
                            ssl_task=Task(config.ssl_task), callback=callback)


def run_strategy(config: RunConfig, train: SepData, valid: SepData,
                 ssl_train: Optional[SslData] = None, ssl_valid: Optional[SslData] = None,
                 pretrained: Optional[sep.SeparatorParams] = None) -> TrainResult:
    """Dispatch on ``config.strategy``; PT-FT pre-trains unless ``pretrained`` is given."""
    strat = config.strategy_obj()
    if strat.kind == "scratch":
        return train_separation(config, None, train, valid)
    if ssl_train is None and not (strat.kind == "ptft" and pretrained is not None):
        raise StructuralError(f"strategy {strat.label} needs an SSL corpus")
    if strat.kind == "multitask":
        return train_multitask(config, train, valid, ssl_train)
    pre_records: List[PretrainRecord] = []
    if pretrained is None:
        pretrained, pre_records = pretrain(config, ssl_train, ssl_valid, strat.task)
    res = train_separation(config, pretrained, train, valid, pre_cfg=config.model_config(1))
    res.pretrain_records = pre_records
    return res


# -- output files -------------------------------------------------------------------

def epochs_csv(records: Sequence[EpochRecord], with_wall: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPOCHS_HEADER)
    for r in records:
        w.writerow(r.csv_row(with_wall))
    return buf.getvalue()


def read_epochs_csv(path) -> List[EpochRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            out.append(EpochRecord(int(row["epoch"]), float(row["train_loss"]),
                                   float(row["valid_si_snri_db"]),
                                   float(row["switch_pct"]) if row["switch_pct"] else None,
                                   float(row["wall_sec"]) if row["wall_sec"] else 0.0))
    return out


def pretrain_csv(records: Sequence[PretrainRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "train_loss", "valid_loss", "valid_si_snri_db"))
    for r in records:
        w.writerow([r.epoch, repr(r.train_loss), repr(r.valid_loss), repr(r.valid_si_snri_db)])
    return buf.getvalue()


def _write_rows(path, rows: List[dict]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _fresh_dir(out: Path):
    if out.exists() and any(out.iterdir()):
        raise ConfigError(f"out_dir: {out} is not empty (resuming is not supported)")


def run_experiment(config: RunConfig, pretrained_path=None) -> TrainResult:
    """Full run into ``config.out_dir``.

    Writes ``epochs.csv``, ``switches.tsv``, ``summary.txt``, ``params.ckpt``
    plus ``per_example.csv``, ``timing.csv``, ``config.json`` and, when
    applicable, ``pretrain_epochs.csv`` / ``multitask_losses.csv``.
    Nothing is written if inputs fail to load.
    """
    if not config.out_dir:
        raise ConfigError("out_dir: required")
    if not config.sep_corpus:
        raise ConfigError("sep_corpus: required")
    out = Path(config.out_dir)
    _fresh_dir(out)
    strat = config.strategy_obj()
    sep_manifest = Manifest.load(Path(config.sep_corpus) / "manifest.tsv")
    train, valid = SepData.from_manifest(sep_manifest, "train"), SepData.from_manifest(sep_manifest, "valid")
    test = SepData.from_manifest(sep_manifest, "test")
    ssl_train = ssl_valid = None
    pretrained = None
    if pretrained_path is not None:
        pretrained, pcfg, _ = sep.load_checkpoint(pretrained_path)
        if pcfg != config.model_config(1):
            raise ConfigError(f"pretrained checkpoint config {pcfg} does not match the run")
    if strat.kind != "scratch" and not (strat.kind == "ptft" and pretrained is not None):
        if not config.ssl_corpus:
            raise ConfigError(f"ssl_corpus: required for strategy {strat.label}")
        ssl_manifest = Manifest.load(Path(config.ssl_corpus) / "manifest.tsv")
        ssl_train = SslData.from_manifest(ssl_manifest, "train")
        if ssl_manifest.split("valid"):
            ssl_valid = SslData.from_manifest(ssl_manifest, "valid")

    res = run_strategy(config, train, valid, ssl_train, ssl_valid, pretrained)
    cfg2 = config.model_config(2)
    result = evaluate(res.params, cfg2, test)

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "epochs.csv").write_text(epochs_csv(res.records, config.record_wall_time))
    res.switches.dump(out / "switches.tsv")
    sep.save_checkpoint(out / "params.ckpt", res.params, cfg2,
                        {"strategy": strat.label, "seed": config.seed})
    _write_rows(out / "per_example.csv", result.rows)
    _write_rows(out / "timing.csv", [{"epoch": r.epoch, "wall_sec": r.wall_sec} for r in res.records])
    if res.pretrain_records:
        (out / "pretrain_epochs.csv").write_text(pretrain_csv(res.pretrain_records))
    if strat.kind == "multitask":
        _write_rows(out / "multitask_losses.csv",
                    [{"epoch": r.epoch, "sep_loss": r.train_loss, "ssl_loss": r.ssl_loss}
                     for r in res.records])
    summary = {
        "strategy": strat.label, "seed": config.seed,
        "test_si_snri_db": result.si_snri, "test_sdri_db": result.sdri,
        "final_valid_si_snri_db": res.records[-1].valid_si_snri_db,
        "separation_updates": res.separation_updates,
        "n_test": len(test),
    }
    (out / "summary.txt").write_text("".join(f"{k}\t{v}\n" for k, v in summary.items()))
    return res


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        k, v = line.split("\t", 1)
        try:
            out[k] = float(v) if "." in v or "e" in v else int(v)
        except ValueError:
            out[k] = v
    return out


def report(run_dirs: Sequence, out_path) -> int:
    """Merge runs into a long-format CSV: run, strategy, seed, epoch, metric, value."""
    rows = []
    for d in run_dirs:
        d = Path(d)
        summ = read_summary(d / "summary.txt")
        for r in read_epochs_csv(d / "epochs.csv"):
            for metric in ("train_loss", "valid_si_snri_db", "switch_pct"):
                v = getattr(r, metric)
                if v is not None:
                    rows.append([d.name, summ["strategy"], summ["seed"], r.epoch, metric, repr(float(v))])
        for metric in ("test_si_snri_db", "test_sdri_db"):
            rows.append([d.name, summ["strategy"], summ["seed"], "", metric, repr(float(summ[metric]))])
    with open(out_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("run", "strategy", "seed", "epoch", "metric", "value"))
        w.writerows(rows)
    return len(rows)


def with_overrides(config: RunConfig, **kw) -> RunConfig:
    return replace(config, **kw)
