"""LogReg, Concat-MLP and GaLeNet classifiers over aligned multimodal batches."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..errors import ShapeError
from ..nn.layers import DEFAULT_DROPOUT, Linear, ReLU, Sequential, encoder_block, softmax
from ..rng import make_rng

N_CLASSES = 4
N_SCALES = 4
MODALITIES = ("scale1", "scale4", "scale16", "scale32", "weather", "trajectory")
MODALITY_GROUPS = {"image": MODALITIES[:4]}


@dataclass(frozen=True)
class ModelOutput:
    main_logits: np.ndarray
    aux_logits: Optional[tuple[np.ndarray, ...]] = None


def _check_batch(batch, image_dim: Optional[int], weather_dim: Optional[int]):
    images = batch.images
    if len(images) != N_SCALES:
        raise ShapeError(f"expected {N_SCALES} image scales, got {len(images)}")
    n = images[0].shape[0]
    for m in images:
        if m.ndim != 2 or m.shape[0] != n or (image_dim is not None and m.shape[1] != image_dim):
            raise ShapeError(f"image embeddings must be {n} x {image_dim}, got {m.shape}")
    if batch.weather.shape[0] != n or (weather_dim is not None and batch.weather.shape[1] != weather_dim):
        raise ShapeError(f"weather features must be {n} x {weather_dim}, got {batch.weather.shape}")
    if batch.trajectory.shape != (n, 3):
        raise ShapeError(f"trajectory features must be {n} x 3, got {batch.trajectory.shape}")


def expand_modalities(modalities: Sequence[str]) -> tuple[str, ...]:
    out: list[str] = []
    for m in modalities:
        for name in MODALITY_GROUPS.get(m, (m,)):
            if name not in MODALITIES:
                raise ValueError(f"unknown modality {m!r}; choose from {MODALITIES + tuple(MODALITY_GROUPS)}")
            if name not in out:
                out.append(name)
    if not out:
        raise ValueError("at least one modality is required")
    return tuple(sorted(out, key=MODALITIES.index))


def select_features(batch, modalities: Sequence[str] = MODALITIES) -> np.ndarray:
    """Concatenate the requested modality blocks, in canonical order."""
    blocks = []
    for name in expand_modalities(modalities):
        if name == "weather":
            blocks.append(batch.weather)
        elif name == "trajectory":
            blocks.append(batch.trajectory)
        else:
            blocks.append(batch.images[MODALITIES.index(name)])
    return np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks], axis=1)


class Model:
    """Common surface: named params/grads/buffers, forward/backward, probabilities."""

    kind: str = ""
    has_aux: bool = False

    def modules(self) -> dict[str, Sequential]:
        raise NotImplementedError

    def _named(self, attr):
        out = {}
        for name, mod in self.modules().items():
            for k, v in mod.named(attr).items():
                out[f"{name}.{k}"] = v
        return out

    def params(self) -> dict[str, np.ndarray]:
        return self._named("params")

    def grads(self) -> dict[str, np.ndarray]:
        return self._named("grads")

    def buffers(self) -> dict[str, np.ndarray]:
        return self._named("buffers")

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.params(), **self.buffers()}

    def zero_grad(self):
        for mod in self.modules().values():
            mod.zero_grad()

    def count_params(self) -> int:
        return int(sum(p.size for p in self.params().values()))

    def config_dict(self) -> dict:
        raise NotImplementedError

    def forward(self, batch, train: bool = False) -> ModelOutput:
        raise NotImplementedError

    def backward(self, main_grad: np.ndarray, aux_grads=None) -> None:
        raise NotImplementedError

    def predict_proba(self, batch) -> np.ndarray:
        return softmax(self.forward(batch, train=False).main_logits)


@dataclass
class LogRegConfig:
    input_dim: int
    modalities: tuple[str, ...] = MODALITIES
    n_classes: int = N_CLASSES
    C: Optional[float] = None

    def __post_init__(self):
        self.modalities = expand_modalities(self.modalities)


class LogReg(Model):
    """Multinomial logistic regression on concatenated modality features."""

    kind = "logreg"

    def __init__(self, config: LogRegConfig):
        self.config = config
        self.linear = Linear(config.input_dim, config.n_classes)
        self._seq = Sequential([("linear", self.linear)])

    def modules(self):
        return {"": self._seq}

    def _named(self, attr):
        return {k: v for k, v in self._seq.named(attr).items()}

    def config_dict(self):
        d = asdict(self.config)
        d["modalities"] = list(self.config.modalities)
        return d

    def features(self, batch) -> np.ndarray:
        x = select_features(batch, self.config.modalities)
        if x.shape[1] != self.config.input_dim:
            raise ShapeError(f"feature width {x.shape[1]} != model input {self.config.input_dim}")
        return x

    def forward(self, batch, train=False):
        return ModelOutput(self.linear.forward(self.features(batch)))

    def backward(self, main_grad, aux_grads=None):
        self.linear.backward(main_grad)


def build_logreg(input_dim: int, n_classes: int = N_CLASSES, modalities: Sequence[str] = MODALITIES) -> LogReg:
    return LogReg(LogRegConfig(input_dim, tuple(modalities), n_classes))


@dataclass
class ConcatMLPConfig:
    image_dim: int = 768
    weather_dim: int = 16
    trajectory_dim: int = 3
    hidden: tuple[int, int] = (128, 32)
    n_classes: int = N_CLASSES
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return N_SCALES * self.image_dim + self.weather_dim + self.trajectory_dim


class ConcatMLP(Model):
    """Early fusion: ``[E_i1..E_i4, E_w, E_t] -> 128 -> 32 -> 4`` with ReLU."""

    kind = "concat-mlp"

    def __init__(self, config: ConcatMLPConfig):
        self.config = config
        rng = make_rng(config.seed, "init")
        h1, h2 = config.hidden
        self.net = Sequential([
            ("fc1", Linear(config.input_dim, h1, rng, init="he")),
            ("relu1", ReLU()),
            ("fc2", Linear(h1, h2, rng, init="he")),
            ("relu2", ReLU()),
            ("head", Linear(h2, config.n_classes, rng, init="xavier")),
        ])

    def modules(self):
        return {"net": self.net}

    def config_dict(self):
        d = asdict(self.config)
        d["hidden"] = list(self.config.hidden)
        return d

    def forward(self, batch, train=False):
        _check_batch(batch, self.config.image_dim, self.config.weather_dim)
        x = select_features(batch, MODALITIES)
        return ModelOutput(self.net.forward(x, train))

    def backward(self, main_grad, aux_grads=None):
        self.net.backward(main_grad)


def build_concat_mlp(config: Optional[ConcatMLPConfig] = None, **kw) -> ConcatMLP:
    return ConcatMLP(config or ConcatMLPConfig(**kw))


@dataclass
class GaLeNetConfig:
    image_dim: int = 768
    weather_dim: int = 16
    trajectory_dim: int = 3
    image_encoder_out: int = 56
    weather_encoder_out: int = 16
    trajectory_encoder_out: int = 3
    fusion_out: int = 56
    n_classes: int = N_CLASSES
    dropout: float = DEFAULT_DROPOUT
    aux_heads: bool = True
    seed: int = 0

    @property
    def concat_width(self) -> int:
        return N_SCALES * self.image_encoder_out + self.weather_encoder_out + self.trajectory_encoder_out


class GaLeNet(Model):
    """Late fusion over modality-specific encoders.

    Each of the four image scales, the weather vector and the trajectory
    triple passes through its own linear -> batchnorm -> ReLU -> dropout
    encoder. The activations are concatenated, passed through a fusion
    encoder of the same form and a linear classification layer. Every image
    activation also feeds its own auxiliary linear classifier.
    """

    kind = "galenet"

    def __init__(self, config: GaLeNetConfig):
        self.config = c = config
        init = make_rng(c.seed, "init")
        drop = make_rng(c.seed, "dropout")
        self.image_encoders = [
            encoder_block(c.image_dim, c.image_encoder_out, init, c.dropout, drop) for _ in range(N_SCALES)
        ]
        self.weather_encoder = encoder_block(c.weather_dim, c.weather_encoder_out, init, c.dropout, drop)
        self.trajectory_encoder = encoder_block(c.trajectory_dim, c.trajectory_encoder_out, init, c.dropout, drop)
        self.fusion = encoder_block(c.concat_width, c.fusion_out, init, c.dropout, drop)
        self.head = Sequential([("linear", Linear(c.fusion_out, c.n_classes, init, init="xavier"))])
        self.aux = (
            [Sequential([("linear", Linear(c.image_encoder_out, c.n_classes, init, init="xavier"))])
             for _ in range(N_SCALES)]
            if c.aux_heads else []
        )
        self.has_aux = c.aux_heads

    def modules(self):
        mods = {f"image{j + 1}": enc for j, enc in enumerate(self.image_encoders)}
        mods["weather"] = self.weather_encoder
        mods["trajectory"] = self.trajectory_encoder
        mods["fusion"] = self.fusion
        mods["head"] = self.head
        for j, a in enumerate(self.aux):
            mods[f"aux{j + 1}"] = a
        return mods

    def config_dict(self):
        return asdict(self.config)

    def encode(self, batch, train=False) -> np.ndarray:
        """Concatenated encoder activations ``A_all``."""
        _check_batch(batch, self.config.image_dim, self.config.weather_dim)
        acts = [enc.forward(x, train) for enc, x in zip(self.image_encoders, batch.images)]
        acts.append(self.weather_encoder.forward(batch.weather, train))
        acts.append(self.trajectory_encoder.forward(batch.trajectory, train))
        self._image_acts = acts[:N_SCALES]
        return np.concatenate(acts, axis=1)

    def forward(self, batch, train=False):
        a_all = self.encode(batch, train)
        main = self.head.forward(self.fusion.forward(a_all, train), train)
        aux = None
        if self.has_aux:
            aux = tuple(h.forward(a, train) for h, a in zip(self.aux, self._image_acts))
        return ModelOutput(main, aux)

    def backward(self, main_grad, aux_grads=None):
        c = self.config
        d_all = self.fusion.backward(self.head.backward(main_grad))
        w = c.image_encoder_out
        splits = np.cumsum([w] * N_SCALES + [c.weather_encoder_out])
        parts = np.split(d_all, splits, axis=1)
        for j in range(N_SCALES):
            d = parts[j]
            if self.has_aux and aux_grads is not None:
                d = d + self.aux[j].backward(aux_grads[j])
            self.image_encoders[j].backward(d)
        self.weather_encoder.backward(parts[N_SCALES])
        self.trajectory_encoder.backward(parts[N_SCALES + 1])


def build_galenet(config: Optional[GaLeNetConfig] = None, **kw) -> GaLeNet:
    return GaLeNet(config or GaLeNetConfig(**kw))


def count_params(model: Model) -> int:
    """Weights, biases and batchnorm scale/shift; running statistics excluded."""
    return model.count_params()


MODEL_KINDS = {"logreg": LogReg, "concat-mlp": ConcatMLP, "galenet": GaLeNet}
CONFIG_TYPES = {"logreg": LogRegConfig, "concat-mlp": ConcatMLPConfig, "galenet": GaLeNetConfig}


def model_from_config(kind: str, config: dict) -> Model:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    cfg = dict(config)
    for key in ("modalities", "hidden"):
        if key in cfg and isinstance(cfg[key], list):
            cfg[key] = tuple(cfg[key])
    return MODEL_KINDS[kind](CONFIG_TYPES[kind](**cfg))
