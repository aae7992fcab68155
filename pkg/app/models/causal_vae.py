"""
Causal VAE: encoder and decoder parameterised through a learnable adjacency A.

    encode:  h = MLP_enc(x_j) per attribute j;  [mean | logvar] = (I - A^T) h
    decode:  v = (I - A^T)^-1 z;                x_hat_j = MLP_dec(v_j)

Shapes: x is (B, L); latents are (B, L, d).
"""
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from app.config.constants import CONDITION_THRESHOLD, VAE_HIDDEN_SIZE, VAE_LATENT_DIM
from app.core import tensor as T
from app.core.errors import ShapeError
from app.core.tensor import Tensor
from app.models.mlp import TwoLayerMlp
from app.utils.serialization import array_from_json, array_to_json, state_from_json, state_to_json

LOG_2PI = math.log(2.0 * math.pi)


def kl_divergence(mean: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mean, exp(logvar)) || N(0, I)) summed per datum, averaged over the batch."""
    terms = T.square(mean) + T.exp(logvar) - 1.0 - logvar
    return T.sum(terms) * (0.5 / mean.shape[0])


def reconstruction_nll(x: Tensor, x_hat: Tensor) -> Tensor:
    """Unit-variance Gaussian negative log-likelihood, averaged over the batch."""
    batch, num_features = x.shape
    squared = T.sum(T.square(x - x_hat)) * (0.5 / batch)
    return squared + 0.5 * num_features * LOG_2PI


def sample_latent(mean: Tensor, logvar: Tensor, rng: np.random.Generator) -> Tensor:
    """Reparameterised draw ``mean + exp(logvar / 2) * eps``, one per datum."""
    eps = rng.standard_normal(mean.shape)
    return mean + T.exp(logvar * 0.5) * eps


class CausalVae:
    def __init__(
        self,
        num_features: int,
        latent_dim: int = VAE_LATENT_DIM,
        hidden_size: int = VAE_HIDDEN_SIZE,
        alpha: Optional[float] = None,
        rng: Optional[np.random.Generator] = None,
        condition_threshold: float = CONDITION_THRESHOLD,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.num_features = num_features
        self.latent_dim = latent_dim
        self.hidden_size = hidden_size
        self.alpha = alpha if alpha is not None else 1.0 / num_features
        self.condition_threshold = condition_threshold
        self.adjacency = Tensor(np.zeros((num_features, num_features)), requires_grad=True, name="adjacency")
        self._mask = Tensor(1.0 - np.eye(num_features))
        self.encoder = TwoLayerMlp(1, hidden_size, 2 * latent_dim, rng, name="encoder")
        self.decoder = TwoLayerMlp(latent_dim, hidden_size, 1, rng, name="decoder")

        self.final_h: Optional[float] = None
        self.converged = False
        self.seed: Optional[int] = None
        self.history: Dict[str, List[Dict[str, float]]] = {"epochs": [], "rounds": []}
        self.frozen = False

    # ------------------------------------------------------------------
    # Structure
    # ------------------------------------------------------------------

    def masked_adjacency(self) -> Tensor:
        """A with its diagonal forced to zero."""
        return T.hadamard(self.adjacency, self._mask)

    def adjacency_matrix(self) -> np.ndarray:
        return self.adjacency.data * self._mask.data

    def mixing(self) -> Tensor:
        return T.identity(self.num_features) - T.transpose(self.masked_adjacency())

    def acyclicity(self) -> Tensor:
        return T.acyclicity_penalty(self.masked_adjacency(), self.alpha)

    # ------------------------------------------------------------------
    # Encoder / decoder
    # ------------------------------------------------------------------

    def _batch(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim == 1:
            x = T.reshape(x, (1, -1))
        if x.ndim != 2 or x.shape[1] != self.num_features:
            raise ShapeError(f"CausalVae expects (batch, {self.num_features}) input, got {x.shape}")
        return x

    def encode(self, x) -> Tuple[Tensor, Tensor]:
        x = self._batch(x)
        hidden = self.encoder(T.reshape(x, (x.shape[0], self.num_features, 1)))
        mixed = T.matmul(self.mixing(), hidden)
        d = self.latent_dim
        return T.columns(mixed, 0, d), T.columns(mixed, d, 2 * d)

    def encode_mean(self, x) -> Tensor:
        return self.encode(x)[0]

    def decode(self, z) -> Tensor:
        z = T.as_tensor(z)
        if z.ndim == 2:
            z = T.reshape(z, (1,) + z.shape)
        if z.ndim != 3 or z.shape[1:] != (self.num_features, self.latent_dim):
            raise ShapeError(f"CausalVae expects (batch, {self.num_features}, {self.latent_dim}) latents, got {z.shape}")
        inverse = T.matrix_inverse(self.mixing(), self.condition_threshold)
        mixed = T.matmul(inverse, z)
        out = self.decoder(mixed)
        return T.reshape(out, (z.shape[0], self.num_features))

    def check_conditioning(self) -> None:
        """Raise NumericError when (I - A^T) is singular or past the condition threshold."""
        T.matrix_inverse(self.mixing().data, self.condition_threshold)

    def reconstruct(self, x) -> np.ndarray:
        return self.decode(self.encode_mean(x)).data

    def reconstruction_mse(self, x: np.ndarray) -> float:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return float(np.mean((self.reconstruct(x) - x) ** 2))

    def elbo_terms(self, x, rng: np.random.Generator) -> Tuple[Tensor, Tensor]:
        x = self._batch(x)
        mean, logvar = self.encode(x)
        x_hat = self.decode(sample_latent(mean, logvar, rng))
        return reconstruction_nll(x, x_hat), kl_divergence(mean, logvar)

    def elbo_loss(self, x, rng: np.random.Generator) -> Tensor:
        """Negative ELBO: reconstruction NLL plus KL to the standard normal prior."""
        nll, kl = self.elbo_terms(x, rng)
        return nll + kl

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def parameters(self) -> List[Tensor]:
        return [self.adjacency] + self.encoder.parameters() + self.decoder.parameters()

    def freeze(self) -> None:
        self.adjacency.requires_grad = False
        self.adjacency.grad = None
        self.encoder.freeze()
        self.decoder.freeze()
        self.frozen = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "causal_vae",
            "num_features": self.num_features,
            "latent_dim": self.latent_dim,
            "hidden_size": self.hidden_size,
            "alpha": self.alpha,
            "condition_threshold": self.condition_threshold,
            "adjacency": array_to_json(self.adjacency_matrix()),
            "encoder": state_to_json(self.encoder.state_dict()),
            "decoder": state_to_json(self.decoder.state_dict()),
            "final_h": self.final_h,
            "converged": self.converged,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CausalVae":
        vae = cls(
            data["num_features"],
            latent_dim=data["latent_dim"],
            hidden_size=data["hidden_size"],
            alpha=data["alpha"],
            condition_threshold=data.get("condition_threshold", CONDITION_THRESHOLD),
        )
        vae.adjacency.data = array_from_json(data["adjacency"])
        vae.encoder.load_state_dict(state_from_json(data["encoder"]))
        vae.decoder.load_state_dict(state_from_json(data["decoder"]))
        vae.final_h = data.get("final_h")
        vae.converged = bool(data.get("converged", False))
        vae.seed = data.get("seed")
        vae.freeze()
        return vae
