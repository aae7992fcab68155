"""
Stage-1 training: causal VAE under the acyclicity constraint.

Augmented Lagrangian over outer rounds:

    loss = nll + w_kl * kl + lam * h(A) + (c / 2) * h(A)^2
    lam <- lam + c * h(A)                     after every round
    c   <- growth * c                         when h(A) did not shrink by the factor

A step that leaves (I - A^T) ill-conditioned is rolled back and A shrunk
towards zero, where the mixing matrix is the identity.
"""
import logging
import warnings
from typing import List, Optional, Tuple

import numpy as np

from app.core import tensor as T
from app.core.errors import ConvergenceWarning, NumericError
from app.core.optim import Adam
from app.models.causal_vae import CausalVae
from app.models.dataset import Dataset
from app.schemas.experiment import VaeTrainConfig

logger = logging.getLogger(__name__)

Snapshot = Tuple[List[np.ndarray], List[Tuple[np.ndarray, np.ndarray, int]]]


def take_snapshot(vae: CausalVae, optimizer: Adam) -> Snapshot:
    params = [p.data.copy() for p in vae.parameters()]
    states = [(s.first_moment.copy(), s.second_moment.copy(), s.step) for s in optimizer.states]
    return params, states


def restore_snapshot(vae: CausalVae, optimizer: Adam, snapshot: Snapshot) -> None:
    params, states = snapshot
    for param, data in zip(vae.parameters(), params):
        param.data = data.copy()
    for state, (first, second, step) in zip(optimizer.states, states):
        state.first_moment, state.second_moment, state.step = first.copy(), second.copy(), step
    optimizer.zero_grad()


class VaeService:
    def __init__(self, config: Optional[VaeTrainConfig] = None):
        self.config = config or VaeTrainConfig()

    def _grow(self, penalty: float) -> float:
        return min(penalty * self.config.penalty_growth, self.config.penalty_cap)

    def recondition(self, vae: CausalVae) -> int:
        """Shrink A until (I - A^T) passes the conditioning check; returns the number of shrinks."""
        shrinks = 0
        while True:
            try:
                vae.check_conditioning()
                return shrinks
            except NumericError:
                vae.adjacency.data = vae.adjacency.data * self.config.adjacency_damping
                shrinks += 1

    def train_vae(self, data: Dataset, seed: int = 0, vae: Optional[CausalVae] = None) -> CausalVae:
        """
        Train a causal VAE on the standardized training split.

        Args:
            data: Dataset (only ``num_features`` and ``x("train")`` are used)
            seed: Seed for initialisation, shuffling and reparameterisation noise
            vae: Unfrozen model to continue from; a fresh one is built when unset
        """
        config = self.config
        x_train = data.x("train")
        n = x_train.shape[0]
        rng = np.random.default_rng(seed)
        if vae is None:
            vae = CausalVae(
                data.num_features,
                latent_dim=config.latent_dim,
                hidden_size=config.hidden_size,
                alpha=config.alpha_acyc,
                rng=rng,
                condition_threshold=config.condition_threshold,
            )
        vae.seed = seed
        optimizer = Adam(vae.parameters(), config.learning_rate)

        lagrange, penalty = config.lagrange_multiplier, config.penalty_weight
        h_previous, h_value = np.inf, np.inf
        mse_previous = np.inf
        skipped = self.recondition(vae)
        min_rounds = min(config.min_outer_rounds, config.max_outer_rounds)
        for outer in range(config.max_outer_rounds):
            for epoch in range(config.epochs):
                order = rng.permutation(n)
                losses = []
                for start in range(0, n, config.batch_size):
                    batch = x_train[order[start:start + config.batch_size]]
                    snapshot = take_snapshot(vae, optimizer)
                    try:
                        h = vae.acyclicity()
                        nll, kl = vae.elbo_terms(batch, rng)
                        loss = nll + kl * config.kl_weight + h * lagrange + T.square(h) * (0.5 * penalty)
                        if not np.isfinite(loss.item()):
                            raise NumericError(f"VAE loss became non-finite in round {outer}, epoch {epoch}")
                        loss.backward()
                        optimizer.step()
                        vae.check_conditioning()
                    except NumericError as e:
                        restore_snapshot(vae, optimizer, snapshot)
                        vae.adjacency.data = vae.adjacency.data * config.adjacency_damping
                        skipped += 1 + self.recondition(vae)
                        logger.warning(f"Rolled back VAE step (round {outer}, epoch {epoch}): {e}")
                        continue
                    losses.append(loss.item())
                vae.history["epochs"].append(
                    {"round": outer, "epoch": epoch, "loss": float(np.mean(losses)) if losses else None}
                )

            skipped += self.recondition(vae)
            h_value = vae.acyclicity().item()
            mse = vae.reconstruction_mse(x_train)
            vae.history["rounds"].append(
                {"round": outer, "h": h_value, "lagrange": lagrange, "penalty": penalty, "reconstruction_mse": mse}
            )
            logger.info(f"VAE round {outer}: h(A)={h_value:.3e}, mse={mse:.4f}, lam={lagrange:.3e}, c={penalty:.1e}")
            plateau = np.isfinite(mse_previous) and mse_previous - mse <= config.mse_plateau * mse_previous
            if h_value < config.h_tolerance and outer + 1 >= min_rounds and plateau:
                break
            lagrange += penalty * h_value
            if h_value > config.shrink_factor * h_previous:
                penalty = self._grow(penalty)
            h_previous, mse_previous = h_value, mse

        vae.final_h = h_value
        vae.converged = h_value < config.h_tolerance
        vae.history["skipped_steps"] = [{"count": skipped}]
        vae.freeze()
        if not vae.converged:
            message = (
                f"h(A) = {h_value:.3e} still above tolerance {config.h_tolerance:.1e} "
                f"after {len(vae.history['rounds'])} rounds"
            )
            logger.warning(message)
            warnings.warn(message, ConvergenceWarning)
        return vae
