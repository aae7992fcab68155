from .mlp import TwoLayerMlp
from .sem import SemNode, SemSpec, nonlinear_sem, toy_sem
from .dataset import Dataset, DatasetSplit, Standardizer
from .classifier import ClassifierModel
from .causal_vae import CausalVae
from .cf_networks import Discriminator, ModulationNet
