"""scikit-learn compatible wrappers around the network and feature pipeline."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .models import INPUT_KINDS, INPUT_SHAPES, MODEL_NAMES
from .preprocessing import EPOCH_SAMPLES, N_CHANNELS, default_montage
from .spectral import LAYOUTS, TopomapRenderer, featurize_epochs, to_network_input
from .training import TrainConfig, train


def _check_samples(X, shape):
    """Validate a batch of samples and add the channel axis where omitted."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=(np.float32, np.float64))
    if X.ndim == len(shape) and shape[0] == 1:
        X = X[:, None]
    if tuple(X.shape[1:]) != tuple(shape):
        raise ValueError(f"expected samples of shape {shape}, got {X.shape[1:]}")
    return X


def _check_labels(y, n):
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n:
        raise ValueError(f"y must be 1-D with {n} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (male) or 1 (female)")
    return y.astype(np.int64)


class ConvNetClassifier(ClassifierMixin, BaseEstimator):
    """Binary sex classifier backed by one of the four named networks.

    ``fit`` trains for ``epochs`` and then restores the parameters of the
    selected epoch (``eval_epoch`` under fixed selection, or the best
    validation epoch), so ``predict`` reflects the assessed model.
    Class 1 (female) is predicted when its probability is at least 0.5.
    """

    def __init__(self, model="s_vgg", width=1.0, init="fan_in", input_scale=1.0,
                 batch_size=70, epochs=70,
                 eval_epoch=None, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8, decay=0.001,
                 decay_mode="l2", selection="fixed", seed=0, dtype="float32"):
        self.model = model
        self.width = width
        self.init = init
        self.input_scale = input_scale
        self.batch_size = batch_size
        self.epochs = epochs
        self.eval_epoch = eval_epoch
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.decay_mode = decay_mode
        self.selection = selection
        self.seed = seed
        self.dtype = dtype

    def _config(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")
        return TrainConfig(**{k: v for k, v in self.get_params().items()
                              if k in TrainConfig.__dataclass_fields__})

    def fit(self, X, y, X_val=None, y_val=None):
        cfg = self._config()
        shape = INPUT_SHAPES[self.model]
        X = _check_samples(X, shape)
        y = _check_labels(y, len(X))
        if X_val is not None:
            X_val = _check_samples(X_val, shape)
            y_val = _check_labels(y_val, len(X_val))
        net = cfg.build_network()
        result = train(net, X, y, cfg, X_val, y_val)
        net.load_parameters(result.checkpoints[result.selected_epoch])
        self.network_ = net.eval()
        self.curves_ = result.curves
        self.selected_epoch_ = result.selected_epoch
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return self.network_.predict_proba(_check_samples(X, self.network_.input_shape))

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    @property
    def input_kind(self):
        return INPUT_KINDS[self.model]


class SpectralTopomapTransformer(TransformerMixin, BaseEstimator):
    """Raw ``(n, 24, 256)`` epochs to theta/alpha/beta topomap images.

    Stateless: ``fit`` only validates parameters. ``output="network"`` gives
    float32 NCHW arrays in [0, 1]; ``output="uint8"`` gives the raw images.
    """

    def __init__(self, layout="chromatic", montage=None, fs=128.0, output="network"):
        self.layout = layout
        self.montage = montage
        self.fs = fs
        self.output = output

    def fit(self, X=None, y=None):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.output not in ("network", "uint8"):
            raise ValueError("output must be 'network' or 'uint8'")
        self.renderer_ = TopomapRenderer(self.montage or default_montage())
        return self

    def transform(self, X):
        check_is_fitted(self, "renderer_")
        X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
        if X.ndim == 4 and X.shape[1] == 1:
            X = X[:, 0]
        if X.shape[1:] != (N_CHANNELS, EPOCH_SAMPLES):
            raise ValueError(f"expected epochs of shape ({N_CHANNELS}, {EPOCH_SAMPLES}), "
                             f"got {X.shape[1:]}")
        pixels = featurize_epochs(X, self.renderer_, self.layout, self.fs)
        return pixels if self.output == "uint8" else to_network_input(pixels, self.layout)
