"""
Training loop: Adam with warmup schedule, deterministic batching, evaluation,
checkpoints, telemetry and probe heatmaps.

Batch composition is a pure function of (seed, step): each epoch draws its own
permutation from a generator derived from the seed and the epoch index. With the
generator state in the checkpoint, a resumed run replays the exact trajectory of
an uninterrupted one.
"""
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import torch

from ..data.schemas import Corpus, SpeedStats, Utterance
from ..data.speed import speaking_speed_target
from ..errors import ConfigurationError, InvalidArgumentError, InvalidInputError, NumericFailure
from ..model.checkpoint import load_checkpoint, save_checkpoint
from ..model.speed_predictor import speed_loss
from ..model.vara import DTYPES, TrainOutput, VaraModel, build_model
from ..numerics import Rng
from ..utils.config import OptimConfig, TrainConfig, dump_config
from ..utils.heatmaps import write_alignments
from ..utils.logging import log_trace_event, setup_logger
from .losses import LossBreakdown, recon_loss, total_loss
from .schedule import lr_schedule
from .telemetry import TelemetryRecord, TelemetryWriter, cumulative

logger = setup_logger(__name__)

PathLike = Union[str, Path]

# generator offsets derived from the training seed
_TRAIN_RNG_OFFSET = 1
_EVAL_RNG_OFFSET = 2
_EPOCH_RNG_OFFSET = 1000


@dataclass
class Batch:
    """Padded mels with true lengths; rows past a length are never read."""
    ids: List[str]
    tokens: List[List[int]]
    speaker_ids: List[Optional[int]]
    mels: torch.Tensor
    lengths: List[int]
    speed_targets: torch.Tensor

    def __len__(self) -> int:
        return len(self.ids)


def make_batch(
    utterances: List[Utterance],
    stats: SpeedStats,
    floor: float,
    dtype: torch.dtype = torch.float64,
    pad_to: Optional[int] = None,
) -> Batch:
    """
    Pad utterances to a common length with the magnitude floor.

    Args:
        utterances: Batch members
        stats: Training speed stats for the targets
        floor: Padding value
        dtype: Tensor dtype
        pad_to: Optional padded length (>= the longest member)
    """
    if not utterances:
        raise InvalidArgumentError("batch must be non-empty")
    lengths = [u.mel.n_frames for u in utterances]
    t_max = max(lengths) if pad_to is None else pad_to
    if t_max < max(lengths):
        raise InvalidArgumentError(f"pad_to={pad_to} shorter than longest member {max(lengths)}")
    n_mels = utterances[0].mel.n_mels
    mels = torch.full((len(utterances), t_max, n_mels), floor, dtype=dtype)
    for i, u in enumerate(utterances):
        mels[i, : lengths[i]] = torch.from_numpy(u.mel.frames).to(dtype)
    targets = torch.tensor(
        [speaking_speed_target(u.mel.n_frames, u.n_tokens, stats) for u in utterances], dtype=dtype
    )
    return Batch(
        ids=[u.utt_id for u in utterances],
        tokens=[list(u.tokens) for u in utterances],
        speaker_ids=[u.speaker_id for u in utterances],
        mels=mels,
        lengths=lengths,
        speed_targets=targets,
    )


def compute_loss(
    model: VaraModel,
    batch: Batch,
    cfg: TrainConfig,
    rng: Rng,
    training: bool = True,
) -> Tuple[LossBreakdown, List[TrainOutput]]:
    """
    Forward every batch member through the posterior path and combine the objective.

    Members run one by one on their true lengths, which is the masked form of
    padded batching: padding never enters a forward pass.
    """
    outputs: List[TrainOutput] = []
    recons, kl_raw, kl_frame, d_hats = [], [], [], []
    for i in range(len(batch)):
        mel = batch.mels[i, : batch.lengths[i]]
        speaker = batch.speaker_ids[i] if cfg.model.n_speakers > 1 else None
        out = model.forward_train(mel, batch.tokens[i], speaker, rng, training)
        recons.append(recon_loss(mel, out.mel_hat, cfg.mel.floor))
        kl_raw.append(out.hierarchy.kl_per_layer())
        kl_frame.append(out.hierarchy.kl_per_frame())
        d_hats.append(out.d_hat)
        outputs.append(out)

    breakdown = total_loss(
        speed=speed_loss(batch.speed_targets, torch.stack(d_hats)),
        recon=torch.stack(recons).mean(),
        kl_per_layer=torch.stack(kl_raw).sum(dim=0),
        kl_per_frame=torch.stack(kl_frame).mean(dim=0),
        cfg=cfg.loss,
        batch_size=len(batch),
    )
    return breakdown, outputs


def build_optimizer(params: Iterable[torch.Tensor], optim: OptimConfig) -> torch.optim.Adam:
    """Adam with the configured moments; the lr is set per step by apply_scheduled_step."""
    return torch.optim.Adam(
        params,
        lr=lr_schedule(1, optim.warmup_steps, optim.max_lr),
        betas=(optim.beta1, optim.beta2),
        eps=optim.eps,
    )


def clip_gradients(params: List[torch.Tensor], clip: float, step: int) -> float:
    """Global-norm clip in place (clip <= 0 disables); returns the pre-clip norm."""
    if clip <= 0:
        return float(torch.linalg.vector_norm(torch.stack([p.grad.norm() for p in params])))
    grad_norm = float(torch.nn.utils.clip_grad_norm_(params, clip))
    if grad_norm > clip:
        log_trace_event(
            logger, "trainer", "clip_gradients",
            f"step {step}: grad norm {grad_norm:.4g} clipped to {clip}",
            {"step": step, "grad_norm": grad_norm}, level=logging.DEBUG,
        )
    return grad_norm


def apply_scheduled_step(optimizer: torch.optim.Optimizer, step: int, optim: OptimConfig) -> float:
    """Set the scheduled lr for `step` (1-based) and apply one update."""
    lr = lr_schedule(step, optim.warmup_steps, optim.max_lr)
    for group in optimizer.param_groups:
        group["lr"] = lr
    optimizer.step()
    return lr



class Trainer:
    """
    Owns the model, optimizer and generator of one training run.

    Args:
        cfg: Resolved configuration
        corpus: Corpus with train (and optionally valid) splits and speed stats
        out_dir: Run directory for telemetry, checkpoints and heatmaps; None keeps everything in memory
    """

    def __init__(self, cfg: TrainConfig, corpus: Corpus, out_dir: Optional[PathLike] = None):
        self.cfg = cfg
        self.corpus = corpus
        self.out_dir = Path(out_dir) if out_dir else None
        self._check_compatible()

        self.dtype = DTYPES[cfg.train.precision]
        self.train_set = corpus.split("train")
        self.valid_set = corpus.split("valid")
        self.stats: SpeedStats = corpus.speed_stats

        self.model = build_model(cfg.model, corpus.n_mels, cfg.train.seed, cfg.train.precision, cfg.mel.floor)
        self.optimizer = build_optimizer(self.model.parameters(), cfg.optim)
        self.rng = Rng(cfg.train.seed).spawn(_TRAIN_RNG_OFFSET)
        self.step = 0
        self._epoch_cache: Dict[int, List[int]] = {}

        self.telemetry: Optional[TelemetryWriter] = None
        self.validation: Optional[TelemetryWriter] = None
        self._t0 = time.perf_counter()

    def _check_compatible(self) -> None:
        """Reject config/data mismatches before step 1."""
        cfg, corpus = self.cfg, self.corpus
        train = corpus.split("train")
        if not train:
            raise InvalidInputError("corpus has no train split")
        if corpus.speed_stats is None:
            raise ConfigurationError("corpus has no fitted speed stats")
        if corpus.n_mels != cfg.mel.n_mels:
            raise ConfigurationError(f"corpus has {corpus.n_mels} mel banks, config expects {cfg.mel.n_mels}")
        if corpus.vocab.size > cfg.model.vocab_size:
            raise ConfigurationError(
                f"corpus vocabulary ({corpus.vocab.size}) exceeds model.vocab_size ({cfg.model.vocab_size})"
            )
        if corpus.n_speakers > cfg.model.n_speakers:
            raise ConfigurationError(
                f"corpus has {corpus.n_speakers} speakers, model.n_speakers is {cfg.model.n_speakers}"
            )
        short = [u.utt_id for u in corpus.utterances if u.mel.n_frames < cfg.model.max_reduction]
        if short:
            raise InvalidInputError(
                f"{len(short)} utterances shorter than the max reduction {cfg.model.max_reduction}: {short[:3]}"
            )

    @property
    def batches_per_epoch(self) -> int:
        return math.ceil(len(self.train_set) / self.cfg.train.batch_size)

    def batch_indices(self, step: int) -> List[int]:
        """Train-split indices of the batch used at `step` (1-based)."""
        if step < 1:
            raise InvalidArgumentError(f"step must be >= 1, got {step}")
        epoch, position = divmod(step - 1, self.batches_per_epoch)
        if epoch not in self._epoch_cache:
            self._epoch_cache = {
                epoch: Rng(self.cfg.train.seed).spawn(_EPOCH_RNG_OFFSET + epoch).permutation(len(self.train_set)).tolist()
            }
        order = self._epoch_cache[epoch]
        size = self.cfg.train.batch_size
        return order[position * size:(position + 1) * size]

    def batch_for_step(self, step: int) -> Batch:
        members = [self.train_set[i] for i in self.batch_indices(step)]
        return make_batch(members, self.stats, self.cfg.mel.floor, self.dtype)

    def train_step(self, batch: Batch) -> Tuple[LossBreakdown, float]:
        """
        One optimizer update.

        Returns:
            (loss breakdown, pre-clip gradient norm)

        Raises:
            NumericFailure: non-finite loss; the batch ids are dumped to the run directory
        """
        if len(batch) == 0:
            raise InvalidArgumentError("batch must be non-empty")
        step = self.step + 1
        self.model.train()
        self.optimizer.zero_grad(set_to_none=True)
        breakdown, _ = compute_loss(self.model, batch, self.cfg, self.rng, training=True)
        if not torch.isfinite(breakdown.total):
            self._dump_failure(step, batch, breakdown)
            raise NumericFailure(f"non-finite loss at step {step}", batch.ids)

        breakdown.total.backward()
        params = [p for p in self.model.parameters() if p.grad is not None]
        grad_norm = clip_gradients(params, self.cfg.optim.grad_clip, step)
        if not math.isfinite(grad_norm):
            self._dump_failure(step, batch, breakdown)
            raise NumericFailure(f"non-finite gradient norm at step {step}", batch.ids)

        apply_scheduled_step(self.optimizer, step, self.cfg.optim)
        self.step = step
        return breakdown, grad_norm

    def _dump_failure(self, step: int, batch: Batch, breakdown: LossBreakdown) -> None:
        report = {"step": step, "batch_ids": batch.ids, "loss": breakdown.as_row()}
        logger.error(f"Numeric failure at step {step}: {report}")
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            (self.out_dir / "numeric_failure.json").write_text(json.dumps(report, indent=2, default=str))

    def evaluate(self, split: str = "valid") -> TelemetryRecord:
        """
        Posterior-path loss on a split without dropout and without touching the
        training generator. Falls back to the train split when `split` is empty.
        """
        members = self.corpus.split(split)
        if not members:
            logger.warning(f"Split {split!r} is empty; evaluating on train")
            members = self.train_set
        batch = make_batch(members, self.stats, self.cfg.mel.floor, self.dtype)

        self.model.eval()
        with torch.no_grad():
            breakdown, outputs = compute_loss(
                self.model, batch, self.cfg, Rng(self.cfg.train.seed).spawn(_EVAL_RNG_OFFSET), training=False
            )
        d_hat = torch.stack([o.d_hat for o in outputs])
        speed_mse = float(((d_hat - batch.speed_targets) ** 2).mean())
        kls = breakdown.kl_list()
        record = TelemetryRecord(
            step=self.step,
            speed=float(breakdown.speaking_speed),
            recon=float(breakdown.recon),
            kl_total=float(breakdown.kl_total),
            gain=float(breakdown.detailed_kl_gain),
            total=float(breakdown.total),
            kl_per_layer=kls,
            cumulative_kl=cumulative(kls),
            speed_mse=speed_mse,
            neg_elbo=float(breakdown.recon + breakdown.kl_total),
            wall_time=time.perf_counter() - self._t0,
        )
        log_trace_event(
            logger, "trainer", "evaluate",
            f"step {self.step}: recon={record.recon:.4f} kl={record.kl_total:.4f} speed_mse={speed_mse:.4f}",
            {"step": self.step, "n_utts": len(members)},
        )
        return record

    def probe_utterance(self) -> Utterance:
        """First validation utterance (first train utterance when there is none)."""
        return (self.valid_set or self.train_set)[0]

    def write_probe_heatmaps(self, directory: PathLike) -> int:
        utt = self.probe_utterance()
        mel = torch.from_numpy(utt.mel.frames).to(self.dtype)
        speaker = utt.speaker_id if self.cfg.model.n_speakers > 1 else None
        self.model.eval()
        with torch.no_grad():
            out = self.model.forward_train(mel, utt.tokens, speaker, Rng(self.cfg.train.seed).spawn(_EVAL_RNG_OFFSET), training=False)
        return write_alignments(directory, out.alignments)

    def save(self, path: PathLike) -> Path:
        return save_checkpoint(
            path, self.model, self.cfg, self.step, self.corpus.n_mels,
            optimizer=self.optimizer, rng=self.rng,
            vocab=self.corpus.vocab, speed_stats=self.stats,
        )

    def resume(self, path: PathLike) -> int:
        """Restore model, optimizer, generator and step from a checkpoint."""
        ckpt = load_checkpoint(path, self.model, self.cfg, self.optimizer, self.rng)
        self.step = ckpt.step
        logger.info(f"Resumed from {path} at step {self.step}")
        return self.step

    def _open_telemetry(self, resumed: bool) -> None:
        if not self.out_dir:
            return
        self.telemetry = TelemetryWriter(self.out_dir / "telemetry.csv", resume=resumed)
        self.validation = TelemetryWriter(self.out_dir / "validation.csv", resume=resumed)
        if resumed:
            self.telemetry.truncate_after(self.step)
            self.validation.truncate_after(self.step)

    def fit(self, total_steps: Optional[int] = None, resume_from: Optional[PathLike] = None) -> List[TelemetryRecord]:
        """
        Train until `total_steps` (default train.total_steps).

        Returns:
            Training telemetry records logged by this call
        """
        total = total_steps or self.cfg.train.total_steps
        tcfg = self.cfg.train
        if resume_from:
            self.resume(resume_from)
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            dump_config(self.cfg, self.out_dir / "config.yaml")
        self._open_telemetry(resumed=bool(resume_from))

        logger.info(
            f"Training {self.model.n_layers} latent layers on {len(self.train_set)} utterances, "
            f"steps {self.step + 1}..{total}, precision {tcfg.precision}"
        )
        records: List[TelemetryRecord] = []
        while self.step < total:
            breakdown, grad_norm = self.train_step(self.batch_for_step(self.step + 1))
            step = self.step

            if step % tcfg.log_interval == 0:
                row = breakdown.as_row()
                kls = breakdown.kl_list()
                record = TelemetryRecord(
                    step=step,
                    speed=row["speed"],
                    recon=row["recon"],
                    kl_total=row["kl_total"],
                    gain=row["gain"],
                    total=row["total"],
                    kl_per_layer=kls,
                    cumulative_kl=cumulative(kls),
                    lr=self.optimizer.param_groups[0]["lr"],
                    grad_norm=grad_norm,
                    wall_time=time.perf_counter() - self._t0,
                )
                records.append(record)
                if self.telemetry:
                    self.telemetry.append(record)
                logger.info(f"step {step}: total={record.total:.4f} recon={record.recon:.4f} kl={record.kl_total:.4f}")

            if step % tcfg.eval_interval == 0 or step == total:
                val = self.evaluate()
                if self.validation:
                    self.validation.append(val)
                if self.out_dir:
                    self.write_probe_heatmaps(self.out_dir / "alignments" / f"step_{step}")

            if self.out_dir and (step % tcfg.checkpoint_interval == 0 or step == total):
                ckpt_dir = self.out_dir / "checkpoints"
                self.save(ckpt_dir / f"step_{step}.ckpt")
                self.save(ckpt_dir / "last.ckpt")

        return records
