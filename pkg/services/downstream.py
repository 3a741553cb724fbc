"""
Downstream Models

The predictive models trained on real, synthetic or combined sets:
- ForecastModel: two stacked LSTM layers, dropout, dense head of H x F
- LogisticModel: L1-regularized logistic regression on flattened 30-day windows
- ClassifierModel: LSTM, dropout, dense 100 (tanh), dense 2 (softmax)
"""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_expit

from core import autodiff as ad
from core.autodiff import Tape, Tensor
from core.datasets import FEATURE_NAMES, SupervisedSet
from core.interfaces.model import BaseModel
from core.nets import (AdamState, DenseLayer, LSTMCell, adam_step, cross_entropy, dropout, init_layers,
                       lstm_forward, mse_loss)
from utils.errors import ConfigError, DataError, NumericalError, ShapeError, TrainingDivergedError
from utils.logger import get_logger
from utils.seeding import rng_for

logger = get_logger(__name__)


def _from_dict(cls, data: Dict[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown {cls.__name__} keys: {unknown}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"Invalid {cls.__name__}: {e}") from e


def _to_dict(config) -> Dict[str, Any]:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(config).items()}


@dataclass
class ForecasterConfig:
    window: int = 25
    horizon: int = 1
    hidden: Tuple[int, ...] = (64, 64)
    dropout: float = 0.2
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    log_every: int = 10
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.window < 1 or self.horizon < 1:
            raise ConfigError("window and horizon must be >= 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ConfigError("forecaster needs at least one LSTM layer of positive width")
        _validate_training(self)

    to_dict = _to_dict

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ForecasterConfig':
        return _from_dict(cls, data)


@dataclass
class ClassifierConfig:
    window: int = 30
    hidden: int = 64
    dense: int = 100
    dropout: float = 0.2
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    log_every: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.hidden < 1 or self.dense < 1:
            raise ConfigError("window, hidden and dense must be >= 1")
        _validate_training(self)

    to_dict = _to_dict

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ClassifierConfig':
        return _from_dict(cls, data)


@dataclass
class LogisticConfig:
    """
    lam=None selects lambda by cross-validated log-loss over lambda_grid.
    """

    window: int = 30
    lam: Optional[float] = None
    lambda_grid: Tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
    cv_folds: int = 5
    standardize: bool = True
    max_iter: int = 5000
    tol: float = 1e-9

    def __post_init__(self):
        self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not self.lambda_grid or min(self.lambda_grid) < 0:
            raise ConfigError("lambda_grid must hold non-negative values")
        if self.cv_folds < 2 or self.max_iter < 1 or self.tol <= 0:
            raise ConfigError("cv_folds >= 2, max_iter >= 1 and tol > 0 are required")

    to_dict = _to_dict

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LogisticConfig':
        return _from_dict(cls, data)


def _validate_training(config) -> None:
    if not 0.0 <= config.dropout < 1.0:
        raise ConfigError(f"dropout must be in [0, 1), got {config.dropout}")
    if config.epochs < 1 or config.batch_size < 1 or config.learning_rate <= 0:
        raise ConfigError("epochs, batch_size and learning_rate must be positive")


# ---------------------------------------------------------------------------
# Input scaling for the neural models
# ---------------------------------------------------------------------------

@dataclass
class RangeScaler:
    """Per-feature map of the training range onto [-1, 1]."""

    midpoint: np.ndarray
    halfrange: np.ndarray

    @classmethod
    def fit(cls, inputs: np.ndarray, eps: float = 1e-8) -> 'RangeScaler':
        flat = inputs.reshape(-1, inputs.shape[-1])
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        return cls(midpoint=(lo + hi) / 2.0, halfrange=np.maximum((hi - lo) / 2.0, eps))

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.midpoint) / self.halfrange

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return x * self.halfrange + self.midpoint

    def to_dict(self) -> Dict[str, List[float]]:
        return {'midpoint': self.midpoint.tolist(), 'halfrange': self.halfrange.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RangeScaler':
        return cls(np.asarray(data['midpoint'], dtype=np.float64), np.asarray(data['halfrange'], dtype=np.float64))


def _check_windows(windows: np.ndarray, W: int, F: int) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim == 2:
        windows = windows[None]
    if windows.ndim != 3 or windows.shape[1:] != (W, F):
        raise ShapeError(f"expected windows of shape ({W}, {F}), got {windows.shape}")
    return windows


def _fit_minibatch(model: BaseModel, inputs: np.ndarray, targets: np.ndarray,
                   loss_fn: Callable[[Dict[str, Tensor], np.ndarray, np.ndarray, np.random.Generator], Tensor],
                   config, name: str) -> List[float]:
    """
    Shuffled minibatch Adam training shared by the neural models.

    Returns:
        Per-epoch mean training loss
    """
    shuffle_rng = rng_for(config.seed, f'{name}.shuffle')
    dropout_rng = rng_for(config.seed, f'{name}.dropout')
    opt = AdamState(learning_rate=config.learning_rate)
    n = len(inputs)
    history: List[float] = []
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            index = order[start:start + config.batch_size]
            tape = Tape()
            p = model.bind(tape)
            loss = loss_fn(p, inputs[index], targets[index], dropout_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(f"{name}: non-finite loss in epoch {epoch}", history=history)
            try:
                adam_step(model.params, ad.backward(tape, loss).for_params(p), opt)
            except NumericalError as e:
                raise TrainingDivergedError(f"{name}: {e}", history=history) from e
            total += value * len(index)
        history.append(total / n)
        if epoch == 1 or epoch % config.log_every == 0 or epoch == config.epochs:
            logger.info(f"{name} epoch {epoch}/{config.epochs}: loss={history[-1]:.6f}")
    return history


# ---------------------------------------------------------------------------
# Forecaster
# ---------------------------------------------------------------------------

class ForecastModel(BaseModel):
    """Stacked LSTM -> dropout -> dense(H*F), reshaped to (H, F)."""

    kind = 'forecaster'

    def __init__(self, config: ForecasterConfig, scaler: RangeScaler,
                 feature_names: Sequence[str] = FEATURE_NAMES,
                 params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.scaler = scaler
        self.feature_names = list(feature_names)
        F = len(self.feature_names)
        widths = (F,) + config.hidden
        self.cells = [LSTMCell(f'lstm.{i}', widths[i], widths[i + 1]) for i in range(len(config.hidden))]
        self.head = DenseLayer('head', config.hidden[-1], config.horizon * F)
        if params is None:
            params = init_layers(self.cells + [self.head], rng_for(config.seed, 'forecaster.init'))
        self.params = params
        self.loss_history: List[float] = []

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def config_snapshot(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def statistics(self) -> Dict[str, Any]:
        return {'scaler': self.scaler.to_dict(), 'feature_names': self.feature_names}

    @classmethod
    def from_state(cls, params, config, statistics) -> 'ForecastModel':
        return cls(ForecasterConfig.from_dict(config), RangeScaler.from_dict(statistics['scaler']),
                   statistics['feature_names'], params={k: np.array(v) for k, v in params.items()})

    def forward(self, p, x_scaled: np.ndarray, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """(batch, W, F) scaled windows -> (batch, H, F) scaled forecasts."""
        h = lstm_forward(self.cells, p, ad.constant(x_scaled))
        h = dropout(h, self.config.dropout, training, rng)
        return ad.reshape(self.head(p, h), (x_scaled.shape[0], self.horizon, len(self.feature_names)))

    def predict(self, windows: np.ndarray) -> np.ndarray:
        """(n, W, F) yield windows -> (n, H, F) yield forecasts, dropout off."""
        windows = _check_windows(windows, self.config.window, len(self.feature_names))
        out = self.forward(self.bind(), self.scaler.transform(windows))
        return self.scaler.inverse(out.data)


def train_forecaster(data: SupervisedSet, H: int, config: ForecasterConfig = ForecasterConfig()) -> ForecastModel:
    """
    Train a forecaster with MSE loss and Adam.

    Inputs and targets are scaled by the training inputs' per-feature range.
    """
    if data.kind != 'forecast':
        raise DataError(f"train_forecaster needs a forecast set, got '{data.kind}'")
    if len(data) == 0:
        raise DataError("Cannot train on an empty set")
    if data.H != H:
        raise ShapeError(f"Set targets have horizon {data.H}, expected {H}")
    config = replace(config, horizon=H, window=data.W)
    scaler = RangeScaler.fit(data.inputs)
    model = ForecastModel(config, scaler, data.feature_names)
    inputs = scaler.transform(data.inputs)
    targets = scaler.transform(data.targets)
    logger.info(f"📉 Training {H}-day forecaster on {len(data)} {data.provenance} windows")

    def loss_fn(p, x, y, rng):
        return mse_loss(model.forward(p, x, training=True, rng=rng), y)

    model.loss_history = _fit_minibatch(model, inputs, targets, loss_fn, config, f'forecaster.{data.provenance}.h{H}')
    return model


def forecast(model: ForecastModel, window: np.ndarray) -> np.ndarray:
    """One (W, F) window -> (H, F) forecast."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.config.window, len(model.feature_names)):
        raise ShapeError(f"forecast expects a ({model.config.window}, {len(model.feature_names)}) window, got {window.shape}")
    return model.predict(window[None])[0]


# ---------------------------------------------------------------------------
# L1 logistic regression
# ---------------------------------------------------------------------------

def soft_threshold(v: np.ndarray, threshold: float) -> np.ndarray:
    """prox of threshold * ||.||_1: sign(v) * max(|v| - threshold, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


def log_loss_sum(X: np.ndarray, y: np.ndarray, intercept: float, beta: np.ndarray) -> float:
    """sum_i -log p(y_i | x_i)."""
    z = intercept + X @ beta
    return float(-(y * log_expit(z) + (1.0 - y) * log_expit(-z)).sum())


def l1_objective(X: np.ndarray, y: np.ndarray, intercept: float, beta: np.ndarray, lam: float) -> float:
    return log_loss_sum(X, y, intercept, beta) + lam * float(np.abs(beta).sum())


@dataclass
class ProximalResult:
    intercept: float
    beta: np.ndarray
    objective: List[float] = field(default_factory=list)
    converged: bool = False


def proximal_gradient(X: np.ndarray, y: np.ndarray, lam: float, max_iter: int = 5000,
                      tol: float = 1e-9) -> ProximalResult:
    """
    ISTA with backtracking on sum log-loss + lam * ||beta||_1.

    The intercept takes plain gradient steps. The step size grows by 2 before
    each line search, and a step is accepted only under the sufficient-decrease
    bound, which keeps the objective non-increasing.
    """
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    M, D = X.shape
    b0, beta = 0.0, np.zeros(D)
    design = np.hstack([np.ones((M, 1)), X])
    lipschitz = max(np.linalg.norm(design, 2) ** 2 / 4.0, 1e-12)
    step = 1.0 / lipschitz

    smooth = log_loss_sum(X, y, b0, beta)
    result = ProximalResult(intercept=b0, beta=beta, objective=[smooth + lam * float(np.abs(beta).sum())])
    for _ in range(max_iter):
        residual = expit(b0 + X @ beta) - y
        g0, g = float(residual.sum()), X.T @ residual
        step *= 2.0
        while True:
            new_b0 = b0 - step * g0
            new_beta = soft_threshold(beta - step * g, step * lam)
            d0, d = new_b0 - b0, new_beta - beta
            new_smooth = log_loss_sum(X, y, new_b0, new_beta)
            bound = smooth + g0 * d0 + float(g @ d) + (d0 * d0 + float(d @ d)) / (2.0 * step)
            if new_smooth <= bound + 1e-12 * max(1.0, abs(bound)) or step <= 1e-3 / lipschitz:
                break
            step /= 2.0

        new_objective = new_smooth + lam * float(np.abs(new_beta).sum())
        previous = result.objective[-1]
        if new_objective > previous + 1e-10 * max(1.0, abs(previous)):
            raise NumericalError(f"proximal step increased the objective ({previous} -> {new_objective})")
        b0, beta, smooth = new_b0, new_beta, new_smooth
        result.objective.append(new_objective)
        if abs(previous - new_objective) <= tol * max(1.0, abs(previous)):
            result.converged = True
            break

    result.intercept, result.beta = b0, beta
    return result


class LogisticModel(BaseModel):
    """
    p = sigmoid(intercept + beta . standardized features).

    Features are the window flattened day-major:
    [y1_day1, y10_day1, y1_day2, y10_day2, ...].
    """

    kind = 'logistic'

    def __init__(self, config: LogisticConfig, mean: np.ndarray, std: np.ndarray, lam: float,
                 feature_names: Sequence[str] = FEATURE_NAMES,
                 params: Optional[Dict[str, np.ndarray]] = None, single_class: bool = False):
        self.config = config
        self.feature_names = list(feature_names)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        self.lam = float(lam)
        self.single_class = single_class
        n_coef = config.window * len(self.feature_names)
        self.params = params if params is not None else {'beta': np.zeros(n_coef), 'intercept': np.zeros(1)}
        self.objective_history: List[float] = []

    @property
    def beta(self) -> np.ndarray:
        return self.params['beta']

    @property
    def intercept(self) -> float:
        return float(self.params['intercept'][0])

    def config_snapshot(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def statistics(self) -> Dict[str, Any]:
        return {
            'mean': self.mean.tolist(),
            'std': self.std.tolist(),
            'lambda': self.lam,
            'single_class': self.single_class,
            'feature_names': self.feature_names,
            'feature_layout': 'day-major',
        }

    @classmethod
    def from_state(cls, params, config, statistics) -> 'LogisticModel':
        return cls(LogisticConfig.from_dict(config), statistics['mean'], statistics['std'], statistics['lambda'],
                   statistics['feature_names'], params={k: np.array(v) for k, v in params.items()},
                   single_class=statistics.get('single_class', False))

    def features(self, windows: np.ndarray) -> np.ndarray:
        windows = _check_windows(windows, self.config.window, len(self.feature_names))
        return (windows.reshape(len(windows), -1) - self.mean) / self.std

    def predict_proba(self, windows: np.ndarray) -> np.ndarray:
        return expit(self.intercept + self.features(windows) @ self.beta)


def _standardization(flat: np.ndarray, enabled: bool) -> Tuple[np.ndarray, np.ndarray]:
    if not enabled:
        return np.zeros(flat.shape[1]), np.ones(flat.shape[1])
    std = flat.std(axis=0)
    return flat.mean(axis=0), np.where(std > 0, std, 1.0)


def _fit_logistic(flat: np.ndarray, y: np.ndarray, lam: float, config: LogisticConfig) -> Tuple[ProximalResult, np.ndarray, np.ndarray, bool]:
    mean, std = _standardization(flat, config.standardize)
    if np.all(y == y[0]):
        # intercept-only fit on smoothed class frequency
        rate = (y.sum() + 0.5) / (len(y) + 1.0)
        result = ProximalResult(intercept=float(np.log(rate / (1.0 - rate))), beta=np.zeros(flat.shape[1]),
                                converged=True)
        return result, mean, std, True
    result = proximal_gradient((flat - mean) / std, y, lam, config.max_iter, config.tol)
    return result, mean, std, False


def select_lambda(flat: np.ndarray, y: np.ndarray, config: LogisticConfig) -> float:
    """Lambda with the lowest mean held-out log-loss over contiguous CV folds."""
    folds = np.array_split(np.arange(len(y)), config.cv_folds)
    scores = []
    for lam in config.lambda_grid:
        losses = []
        for held in folds:
            if len(held) == 0:
                continue
            train = np.setdiff1d(np.arange(len(y)), held)
            result, mean, std, _ = _fit_logistic(flat[train], y[train], lam, config)
            X_held = (flat[held] - mean) / std
            losses.append(log_loss_sum(X_held, y[held], result.intercept, result.beta) / len(held))
        scores.append(float(np.mean(losses)))
        logger.debug(f"lambda={lam:g}: cv log-loss {scores[-1]:.6f}")
    best = config.lambda_grid[int(np.argmin(scores))]
    logger.info(f"Selected lambda={best:g} by {config.cv_folds}-fold cross-validation")
    return best


def train_logistic_l1(data: SupervisedSet, lam: Optional[float] = None,
                      config: LogisticConfig = LogisticConfig()) -> LogisticModel:
    """
    Fit the L1 logistic classifier.

    Args:
        data: Classification set of (W, F) windows
        lam: L1 strength; None uses config.lam or cross-validation
        config: Solver and feature settings

    Returns:
        LogisticModel (intercept only, with a warning, when the set has one class)
    """
    if data.kind != 'classify':
        raise DataError(f"train_logistic_l1 needs a classification set, got '{data.kind}'")
    if len(data) == 0:
        raise DataError("Cannot train on an empty set")
    lam = config.lam if lam is None else lam
    if lam is not None and lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    config = replace(config, window=data.W)

    flat = data.inputs.reshape(len(data), -1)
    y = data.targets
    single = bool(np.all(y == y[0]))
    if lam is None:
        lam = config.lambda_grid[0] if single else select_lambda(flat, y, config)

    result, mean, std, single = _fit_logistic(flat, y, lam, config)
    if single:
        logger.warning(f"⚠️  Only class {int(y[0])} in {len(y)} samples, fitting the intercept only")
    elif not result.converged:
        logger.warning(f"Proximal gradient stopped at max_iter={config.max_iter} before converging")
    model = LogisticModel(config, mean, std, lam, data.feature_names,
                          params={'beta': result.beta.copy(), 'intercept': np.array([result.intercept])},
                          single_class=single)
    model.objective_history = result.objective
    logger.info(f"Logistic model: lambda={lam:g}, {int((model.beta != 0).sum())}/{len(model.beta)} non-zero coefficients")
    return model


def logistic_predict(model: LogisticModel, window: np.ndarray) -> float:
    """P(recession within the lookahead) for one (W, F) window."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.config.window, len(model.feature_names)):
        raise ShapeError(f"logistic_predict expects a ({model.config.window}, {len(model.feature_names)}) window")
    return float(model.predict_proba(window[None])[0])


# ---------------------------------------------------------------------------
# LSTM classifier
# ---------------------------------------------------------------------------

class ClassifierModel(BaseModel):
    """LSTM -> dropout -> dense(100, tanh) -> dense(2, softmax). Column 1 is the recession class."""

    kind = 'lstm_classifier'

    def __init__(self, config: ClassifierConfig, scaler: RangeScaler,
                 feature_names: Sequence[str] = FEATURE_NAMES,
                 params: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.scaler = scaler
        self.feature_names = list(feature_names)
        self.cell = LSTMCell('lstm.0', len(self.feature_names), config.hidden)
        self.dense = DenseLayer('dense', config.hidden, config.dense, 'tanh')
        self.out = DenseLayer('out', config.dense, 2, 'softmax')
        if params is None:
            params = init_layers([self.cell, self.dense, self.out], rng_for(config.seed, 'lstm_classifier.init'))
        self.params = params
        self.loss_history: List[float] = []

    def config_snapshot(self) -> Dict[str, Any]:
        return self.config.to_dict()

    def statistics(self) -> Dict[str, Any]:
        return {'scaler': self.scaler.to_dict(), 'feature_names': self.feature_names}

    @classmethod
    def from_state(cls, params, config, statistics) -> 'ClassifierModel':
        return cls(ClassifierConfig.from_dict(config), RangeScaler.from_dict(statistics['scaler']),
                   statistics['feature_names'], params={k: np.array(v) for k, v in params.items()})

    def forward(self, p, x_scaled: np.ndarray, training: bool = False,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        h = lstm_forward([self.cell], p, ad.constant(x_scaled))
        h = dropout(h, self.config.dropout, training, rng)
        return self.out(p, self.dense(p, h))

    def predict_proba(self, windows: np.ndarray) -> np.ndarray:
        """(n, W, F) windows -> (n, 2) class probabilities."""
        windows = _check_windows(windows, self.config.window, len(self.feature_names))
        return self.forward(self.bind(), self.scaler.transform(windows)).data


def train_lstm_classifier(data: SupervisedSet, config: ClassifierConfig = ClassifierConfig()) -> ClassifierModel:
    """Train with categorical cross-entropy on one-hot labels and Adam."""
    if data.kind != 'classify':
        raise DataError(f"train_lstm_classifier needs a classification set, got '{data.kind}'")
    if len(data) == 0:
        raise DataError("Cannot train on an empty set")
    config = replace(config, window=data.W)
    scaler = RangeScaler.fit(data.inputs)
    model = ClassifierModel(config, scaler, data.feature_names)
    inputs = scaler.transform(data.inputs)
    one_hot = np.eye(2)[data.targets.astype(np.int64)]
    logger.info(f"🔎 Training LSTM classifier on {len(data)} {data.provenance} windows "
                f"({100.0 * data.targets.mean():.1f}% positive)")

    def loss_fn(p, x, y, rng):
        return cross_entropy(model.forward(p, x, training=True, rng=rng), y)

    model.loss_history = _fit_minibatch(model, inputs, one_hot, loss_fn, config, f'lstm_classifier.{data.provenance}')
    return model


def classify(model: ClassifierModel, window: np.ndarray) -> float:
    """Positive-class softmax probability for one (W, F) window."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.config.window, len(model.feature_names)):
        raise ShapeError(f"classify expects a ({model.config.window}, {len(model.feature_names)}) window")
    return float(model.predict_proba(window[None])[0, 1])


def predict_probability(model: BaseModel, windows: np.ndarray) -> np.ndarray:
    """Recession probability per window for either classifier kind."""
    if isinstance(model, LogisticModel):
        return model.predict_proba(windows)
    if isinstance(model, ClassifierModel):
        return model.predict_proba(windows)[:, 1]
    raise DataError(f"'{model.kind}' checkpoints do not produce probabilities")
