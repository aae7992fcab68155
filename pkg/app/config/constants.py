"""
Application Constants

This module contains all magic strings and numbers used throughout the application.
Centralizing constants makes the experiments easier to reproduce and to tweak.
"""

# ============================================================================
# Autodiff Constants
# ============================================================================

# Adam defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# matrix_inverse refuses matrices whose 1-norm condition estimate exceeds this
CONDITION_THRESHOLD = 1e12

# Central finite differences
GRADCHECK_STEP = 1e-5

# ============================================================================
# Dataset Constants
# ============================================================================

SYNTHETIC_SAMPLES = 20000
SPLIT_FRACTION_VAL = 0.1
SPLIT_FRACTION_TEST = 0.1

TOY_NOISE_STD = 0.5
TOY_LABEL_THRESHOLD = 0.5  # sin(x) > 0.5 ...
TOY_LABEL_MIN_COUNT = 2  # ... for more than 2 nodes

NONLINEAR_EXP_CLAMP = 6.0  # X4 clamped to [-6, 6] before exp

NOISE_SCALE_NOTE = "noise parameters are (mean, standard deviation)"
CLAMP_NOTE = "X4 clamped to [-6, 6] before exponentiation in X5"

LABEL_COLUMN = "label"
MISSING_TOKENS = ("", "na", "nan", "null", "none", "?")

# Pima Indians diabetes (standard Kaggle header)
PIMA_FEATURES = ["Pregnancies", "Glucose", "BloodPressure", "SkinThickness", "Insulin", "BMI", "Age"]
PIMA_LABEL = "Outcome"
PIMA_ZERO_MISSING = ["Glucose", "BloodPressure", "SkinThickness", "Insulin", "BMI"]

# ============================================================================
# Classifier Constants
# ============================================================================

CLASSIFIER_HIDDEN_SYNTHETIC = 32
CLASSIFIER_HIDDEN_SMALL = 16
CLASSIFIER_ALLOWED_HIDDEN = (16, 32)
CLASSIFIER_LEARNING_RATE = 1e-3
CLASSIFIER_BATCH_SIZE = 64
CLASSIFIER_EPOCHS = 200
CLASSIFIER_PATIENCE = 20
NUM_CLASSES = 2

# ============================================================================
# Causal VAE Constants
# ============================================================================

VAE_HIDDEN_SIZE = 16
VAE_LATENT_DIM = 4
VAE_EPOCHS_PER_ROUND = 30
VAE_MAX_OUTER_ROUNDS = 20
VAE_BATCH_SIZE = 128
VAE_LEARNING_RATE = 1e-3
VAE_INITIAL_LAGRANGE = 0.0
VAE_INITIAL_PENALTY = 1.0
VAE_PENALTY_GROWTH = 10.0
VAE_PENALTY_CAP = 1e16
VAE_H_TOLERANCE = 1e-8
VAE_H_SHRINK_FACTOR = 0.25
# Weight of the KL term against the unit-variance reconstruction term
VAE_KL_WEIGHT = 0.01
# A round with h(A) under tolerance ends training only after the minimum rounds
# and once the relative drop in reconstruction MSE falls under the plateau
VAE_MIN_OUTER_ROUNDS = 3
VAE_MSE_PLATEAU = 0.02
# Adjacency shrink factor applied when (I - A^T) becomes ill-conditioned
VAE_ADJACENCY_DAMPING = 0.5

# ============================================================================
# Counterfactual Engine Constants
# ============================================================================

CF_ALPHA_CLASS = 0.5
CF_ALPHA_NEAR = 1.0
CF_ALPHA_ADV = 0.5
CF_HINGE_MARGIN = 0.1
CF_GAMMA = 0.05
CF_EPOCHS = 100
CF_BATCH_SIZE = 32
CF_LEARNING_RATE = 1e-3
CF_HIDDEN_SIZE = 32
CF_DIS_STEPS = 1
# The hinge weight alpha1 is multiplied by the growth factor after every epoch
# whose training validity stays under the target, up to the cap
CF_CLASS_SCALE_GROWTH = 2.0
CF_CLASS_SCALE_CAP = 1024.0
CF_TARGET_VALIDITY = 0.99
DISCRIMINATOR_CLAMP = 1e-7

# Hyperparameter grid
CF_GRID_HIDDEN_SIZES = [32, 64]
CF_GRID_LEARNING_RATES = [5e-4, 1e-3, 2e-3]
CF_GRID_BATCH_SIZES = [16, 32]

# ============================================================================
# Baseline Constants
# ============================================================================

# Starting trade-off; a query with no valid iterate is retried from scratch
# with lambda multiplied by the growth factor, up to the round limit
PLAIN_CF_LAMBDA = 1.0
PLAIN_CF_LAMBDA_GROWTH = 10.0
PLAIN_CF_LAMBDA_ROUNDS = 5
PLAIN_CF_STEPS = 500
PLAIN_CF_LEARNING_RATE = 0.05
PLAIN_CF_K = 5
PLAIN_CF_KNN_WEIGHT = 0.5

# ============================================================================
# Metrics Constants
# ============================================================================

NO_CHANGE_EPSILON = 1e-6
COVARIANCE_RIDGE = 1e-6

# ============================================================================
# Harness Constants
# ============================================================================

METHOD_OURS = "Ours"
METHOD_PLAIN_CF = "Plain-CF"
METHOD_PLAIN_CF_K = "Plain-CF_K"
METHODS = [METHOD_OURS, METHOD_PLAIN_CF, METHOD_PLAIN_CF_K]
EXCLUDED_METHODS_NOTE = (
    "CF-VAE and EB-VAE are not produced: they depend on an external method "
    "with manually labelled counterfactuals"
)

SUB_SEED_NAMES = ["dataset", "classifier", "vae", "cf", "baselines", "loo"]
LOO_DEFAULT_FOLDS = 40

NO_FLIP_NOTE = "no flip requested"
INVALID_NOTE = "no valid iterate"

# Output layout (relative to the run directory)
DATA_DIR = "data"
MODELS_DIR = "models"
CURVES_DIR = "curves"
EVAL_DIR = "eval"
GRID_DIR = "grid"
LOO_DIR = "loo"
EXPLAIN_DIR = "explain"
DATASET_FILE = "dataset.csv"
METADATA_FILE = "metadata.json"
CLASS_CORRELATIONS_FILE = "class_correlations.csv"
CLASS_SCATTER_FILE = "class_scatter.png"
CLASSIFIER_FILE = "classifier.json"
VAE_FILE = "vae.json"
ENGINE_FILE = "cf_engine.json"
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.json"
COMPARISON_FILE = "comparison.csv"
PROJECTION_FILE = "projection.csv"
GRID_REPORT_FILE = "grid_report.csv"
BEST_CONFIG_FILE = "best_config.json"

COMPARISON_COLUMNS = ["Method", "Valid (%)", "Const (%)", "Euclidean Dist", "Mahalanobis Dist"]

PACKAGE_VERSION = "0.1.0"
