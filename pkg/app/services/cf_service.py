"""
Stage-2: latent-space counterfactual generation.

A modulation network maps (x, onehot(y_cf)) to a latent perturbation delta;
the frozen VAE decodes z + delta into the counterfactual. A discriminator
keeps the perturbed codes on the distribution of real codes.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config.constants import DISCRIMINATOR_CLAMP, METHOD_OURS, NO_FLIP_NOTE
from app.core import tensor as T
from app.core.errors import NumericError, ShapeError
from app.core.optim import Adam
from app.core.tensor import Tensor
from app.models.causal_vae import CausalVae
from app.models.cf_networks import Discriminator, ModulationNet, one_hot
from app.models.classifier import ClassifierModel
from app.models.dataset import Dataset, Standardizer
from app.schemas.experiment import CfTrainConfig
from app.schemas.results import CounterfactualResult

logger = logging.getLogger(__name__)


def hinge_class_loss_per_sample(scores, y_cf, beta: float) -> Tensor:
    """max{max_{y != y_cf} s_y - s_{y_cf}, -beta} for every row of ``scores``."""
    scores = T.as_tensor(scores)
    if scores.ndim == 1:
        scores = T.reshape(scores, (1, -1))
    target = one_hot(y_cf, scores.shape[-1])
    if target.shape[0] != scores.shape[0]:
        raise ShapeError(f"{target.shape[0]} target labels for {scores.shape[0]} score rows")
    target_score = T.sum(scores * target, axis=-1)
    # Push the target entry below every other score before taking the max
    offset = float(np.ptp(scores.data)) + 1.0
    other_score = T.max(scores - target * offset, axis=-1)
    return T.maximum(other_score - target_score, -beta)


def hinge_class_loss(scores, y_cf, beta: float) -> Tensor:
    """Hinge classification loss summed over the batch."""
    return T.sum(hinge_class_loss_per_sample(scores, y_cf, beta))


def nearest_loss(x, x_cf, delta) -> Tensor:
    """Sum over the batch of ||x - x_cf||^2 + ||delta||^2."""
    return T.l2_norm_sq(T.as_tensor(x) - x_cf) + T.l2_norm_sq(delta)


def adversarial_losses(discriminator: Callable[[Tensor], Tensor], z, z_cf) -> Tuple[Tensor, Tensor]:
    """
    Returns:
        (mod_loss, dis_loss): -mean log D(z_cf) and -mean[log D(z) + log(1 - D(z_cf))]
    """
    low, high = DISCRIMINATOR_CLAMP, 1.0 - DISCRIMINATOR_CLAMP
    fake = T.clamp(discriminator(z_cf), low, high)
    real = T.clamp(discriminator(z), low, high)
    mod_loss = -T.mean(T.log(fake))
    dis_loss = -T.mean(T.log(real) + T.log(1.0 - fake))
    return mod_loss, dis_loss


@dataclass
class CfEngine:
    """Trained modulation network and discriminator plus their provenance."""

    modulation: ModulationNet
    discriminator: Discriminator
    config: CfTrainConfig
    history: List[Dict[str, float]] = field(default_factory=list)
    upstream: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "cf_engine",
            "modulation": self.modulation.to_dict(),
            "discriminator": self.discriminator.to_dict(),
            "config": self.config.model_dump(),
            "upstream": self.upstream,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CfEngine":
        return cls(
            modulation=ModulationNet.from_dict(data["modulation"]),
            discriminator=Discriminator.from_dict(data["discriminator"]),
            config=CfTrainConfig.model_validate(data["config"]),
            upstream=dict(data.get("upstream", {})),
        )


class CounterfactualService:
    """Generates and trains latent counterfactuals against a frozen VAE and black box."""

    def __init__(self, vae: CausalVae, blackbox: ClassifierModel, standardizer: Standardizer):
        self.vae = vae
        self.blackbox = blackbox
        self.standardizer = standardizer

    def perturb_latent(self, modulation: ModulationNet, x, y_cf) -> Tuple[Tensor, Tensor, Tensor]:
        """
        Args:
            modulation: Modulation network
            x: Standardized queries, (B, L) or (L,)
            y_cf: Target labels, one per query

        Returns:
            (z, z_cf, delta) each of shape (B, L, d); z is the posterior mean
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        y_cf = np.atleast_1d(np.asarray(y_cf, dtype=np.int64))
        z = self.vae.encode_mean(x).detach()
        delta = modulation(x, y_cf)
        return z, z + delta, delta

    def generate_batch(
        self, modulation: ModulationNet, x_raw: np.ndarray, y_cf: Sequence[int]
    ) -> List[CounterfactualResult]:
        x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
        y_cf = np.atleast_1d(np.asarray(y_cf, dtype=np.int64))
        if y_cf.shape[0] != x_raw.shape[0]:
            raise ShapeError(f"{y_cf.shape[0]} target labels for {x_raw.shape[0]} queries")
        x_std = self.standardizer.transform(x_raw)
        z, z_cf, delta = self.perturb_latent(modulation, x_std, y_cf)
        x_cf_std = self.vae.decode(z_cf).data
        x_cf_raw = self.standardizer.inverse_transform(x_cf_std)
        original_labels = self.blackbox.predict(x_std)
        cf_labels = self.blackbox.predict(x_cf_std)
        delta_norms = np.sqrt(np.sum(delta.data ** 2, axis=(1, 2)))

        results = []
        for i in range(x_raw.shape[0]):
            results.append(
                CounterfactualResult(
                    method=METHOD_OURS,
                    original=x_raw[i].tolist(),
                    counterfactual=x_cf_raw[i].tolist(),
                    original_label=int(original_labels[i]),
                    target_label=int(y_cf[i]),
                    predicted_cf_label=int(cf_labels[i]),
                    delta_norm=float(delta_norms[i]),
                    latent=z.data[i].tolist(),
                    latent_cf=z_cf.data[i].tolist(),
                    note=NO_FLIP_NOTE if original_labels[i] == y_cf[i] else None,
                )
            )
        return results

    def generate(self, modulation: ModulationNet, x_raw: np.ndarray, y_cf: int) -> CounterfactualResult:
        """Counterfactual for one raw-unit record: standardize, perturb, decode, destandardize."""
        return self.generate_batch(modulation, np.asarray(x_raw, dtype=np.float64)[None, :], [y_cf])[0]

    def train_cf(self, data: Dataset, config: Optional[CfTrainConfig] = None, seed: Optional[int] = None) -> CfEngine:
        """
        Alternate discriminator and modulation updates over the training split.

        Every query targets the opposite of the black box's current prediction.
        While an epoch's training validity stays under ``target_validity`` the
        hinge weight is multiplied by ``class_scale_growth``, up to the cap.
        """
        config = config or CfTrainConfig()
        seed = seed if seed is not None else (config.seed or 0)
        rng = np.random.default_rng(seed)
        num_features, latent_dim = self.vae.num_features, self.vae.latent_dim
        modulation = ModulationNet(num_features, latent_dim, config.hidden_size, config.gamma, rng)
        discriminator = Discriminator(num_features, latent_dim, config.hidden_size, rng)
        mod_optimizer = Adam(modulation.parameters(), config.learning_rate_mod)
        dis_optimizer = Adam(discriminator.parameters(), config.learning_rate_dis)

        x_train = data.x("train")
        n = x_train.shape[0]
        # Upstream models are frozen, so codes and targets are fixed for the whole run
        z_train = self.vae.encode_mean(x_train).data
        y_cf_train = 1 - self.blackbox.predict(x_train)

        engine = CfEngine(modulation, discriminator, config)
        class_scale = 1.0
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            totals = {"dis_loss": 0.0, "mod_loss": 0.0, "hinge": 0.0, "nearest": 0.0, "total": 0.0, "valid": 0.0}
            for start in range(0, n, config.batch_size):
                index = order[start:start + config.batch_size]
                x_batch, z_batch, y_cf = Tensor(x_train[index]), Tensor(z_train[index]), y_cf_train[index]
                batch = len(index)

                for _ in range(config.n_dis_steps):
                    z_fake = (z_batch + modulation(x_batch, y_cf)).detach()
                    _, dis_loss = adversarial_losses(discriminator, z_batch, z_fake)
                    dis_loss.backward()
                    dis_optimizer.step()
                mod_optimizer.zero_grad()

                delta = modulation(x_batch, y_cf)
                z_cf = z_batch + delta
                x_cf = self.vae.decode(z_cf)
                scores = self.blackbox.predict_proba(x_cf)
                hinge = hinge_class_loss(scores, y_cf, config.beta)
                near = nearest_loss(x_batch, x_cf, delta)
                mod_loss, _ = adversarial_losses(discriminator, z_batch, z_cf)
                total = (hinge * (config.alpha1 * class_scale) + near * config.alpha2) / batch + mod_loss * config.alpha3
                if not np.isfinite(total.item()):
                    raise NumericError(
                        f"Counterfactual loss became non-finite at epoch {epoch}: hinge={hinge.item()}, "
                        f"nearest={near.item()}, adversarial={mod_loss.item()}"
                    )
                total.backward()
                mod_optimizer.step()
                # The modulation loss also reaches the discriminator weights
                dis_optimizer.zero_grad()

                totals["dis_loss"] += dis_loss.item() * batch
                totals["mod_loss"] += mod_loss.item() * batch
                totals["hinge"] += hinge.item()
                totals["nearest"] += near.item()
                totals["total"] += total.item() * batch
                totals["valid"] += float(np.sum(np.argmax(scores.data, axis=-1) == y_cf))

            record = {"epoch": epoch, "class_scale": class_scale}
            record.update({key: value / n for key, value in totals.items()})
            engine.history.append(record)
            logger.info(
                f"CF epoch {epoch}: total={record['total']:.4f}, dis={record['dis_loss']:.4f}, "
                f"batch validity={record['valid']:.3f}, hinge scale={class_scale:g}"
            )
            if record["valid"] < config.target_validity:
                class_scale = min(class_scale * config.class_scale_growth, config.class_scale_cap)
        return engine
