"""Model assembly: recurrent feature generator plus task heads.

Three bundle kinds share one generator architecture:

* ``baseline``: generator -> single 1-neuron dense output.
* ``adg``: generator -> SSI head, plus a domain classifier behind a
  gradient reversal layer.
* ``irm``: generator -> SSI head, plus a fixed scalar probe
  (``irm_beta = 1.0``) that is differentiated against but never trained.

Layer counting convention: the generator is a stack of (LSTM, LayerNorm)
pairs — one input pair, ``hidden_layer_count / 2`` middle pairs, one
output pair.  ``hidden_layer_count=6`` therefore means 5 LSTM + 5 LN
layers (2 input + 6 hidden + 2 output layers in total, counting both
layer types).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, ShapeError
from .nn import (
    ParameterSet, Tensor,
    dense, gradient_reversal, last_timestep, layer_norm, lstm, squeeze_width_one,
)
from .nn import checkpoint as _checkpoint

KINDS = ("baseline", "adg", "irm")
N_FEATURES = 5
SSI_HEAD_WIDTHS = (60, 40, 20, 10, 1)
CLASSIFIER_HIDDEN_WIDTHS = (60, 40, 20, 10)


@dataclass
class GeneratorConfig:
    """Feature-generator shape and regularization.

    ``hidden_layer_count`` must be even; it maps to
    ``1 + hidden_layer_count/2 + 1`` LSTM+LN pairs (see module docstring).
    """

    hidden_layer_count: int = 6
    units: int = 64
    regularization_coefficient: float = 1e-4

    def validate(self) -> None:
        if self.hidden_layer_count < 0 or self.hidden_layer_count % 2 != 0:
            raise ConfigError(
                f"hidden_layer_count must be even and >= 0, got {self.hidden_layer_count}"
            )
        if self.units <= 0:
            raise ConfigError(f"units must be > 0, got {self.units}")
        if self.regularization_coefficient < 0:
            raise ConfigError("regularization_coefficient must be >= 0")

    @property
    def n_pairs(self) -> int:
        return 1 + self.hidden_layer_count // 2 + 1


@dataclass
class HeadConfig:
    """Widths of the SSI head and (for adg) the domain classifier."""

    ssi_head_widths: tuple = SSI_HEAD_WIDTHS
    classifier_widths: Optional[tuple] = None   # ends with the domain count
    grl_lambda: float = 10.0

    def validate(self, kind: str) -> None:
        if len(self.ssi_head_widths) < 1 or self.ssi_head_widths[-1] != 1:
            raise ConfigError("ssi head must end with a single output neuron")
        if kind == "adg":
            if not self.classifier_widths or self.classifier_widths[-1] < 1:
                raise ConfigError("adg bundle needs classifier widths ending in the domain count")
            if self.grl_lambda < 0:
                raise ConfigError("grl_lambda must be >= 0")


@dataclass
class ModelBundle:
    kind: str
    gen_config: GeneratorConfig
    head_config: HeadConfig
    n_features: int
    generator: ParameterSet
    ssi_head: ParameterSet
    classifier: Optional[ParameterSet] = None
    irm_beta: Optional[float] = None

    def parameter_sets(self) -> list:
        sets = [self.generator, self.ssi_head]
        if self.classifier is not None:
            sets.append(self.classifier)
        return sets

    def parameter_count(self) -> int:
        return sum(ps.count() for ps in self.parameter_sets())

    def copy(self) -> "ModelBundle":
        return ModelBundle(
            kind=self.kind,
            gen_config=GeneratorConfig(**vars(self.gen_config)),
            head_config=HeadConfig(
                ssi_head_widths=tuple(self.head_config.ssi_head_widths),
                classifier_widths=(tuple(self.head_config.classifier_widths)
                                   if self.head_config.classifier_widths else None),
                grl_lambda=self.head_config.grl_lambda,
            ),
            n_features=self.n_features,
            generator=self.generator.copy(),
            ssi_head=self.ssi_head.copy(),
            classifier=self.classifier.copy() if self.classifier else None,
            irm_beta=self.irm_beta,
        )

    def load_values(self, other: "ModelBundle") -> None:
        self.generator.load_values(other.generator)
        self.ssi_head.load_values(other.ssi_head)
        if (self.classifier is None) != (other.classifier is None):
            raise ConfigError("bundle classifier presence mismatch")
        if self.classifier is not None:
            self.classifier.load_values(other.classifier)


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _init_generator(config: GeneratorConfig, n_features: int,
                    rng: np.random.Generator) -> ParameterSet:
    pset = ParameterSet()
    fan_in = n_features
    h = config.units
    for i in range(config.n_pairs):
        pset.add(f"lstm{i}/wx", _glorot(rng, fan_in, 4 * h, (fan_in, 4 * h)), "kernel")
        pset.add(f"lstm{i}/wh", _glorot(rng, h, 4 * h, (h, 4 * h)), "recurrent")
        bias = np.zeros(4 * h)
        bias[h:2 * h] = 1.0   # forget gate open at start
        pset.add(f"lstm{i}/b", bias, "bias")
        pset.add(f"ln{i}/gain", np.ones(h), "gain")
        pset.add(f"ln{i}/shift", np.zeros(h), "shift")
        fan_in = h
    return pset


def _init_dense_stack(widths, in_dim: int, rng: np.random.Generator) -> ParameterSet:
    pset = ParameterSet()
    fan_in = in_dim
    for i, width in enumerate(widths):
        pset.add(f"dense{i}/w", _glorot(rng, fan_in, width, (fan_in, width)), "kernel")
        pset.add(f"dense{i}/b", np.zeros(width), "bias")
        fan_in = width
    return pset


def build_bundle(kind: str, gen_config: Optional[GeneratorConfig] = None,
                 head_config: Optional[HeadConfig] = None,
                 n_features: int = N_FEATURES, n_domains: Optional[int] = None,
                 seed: int = 0) -> ModelBundle:
    """Construct and initialize a model bundle.

    The generator is initialized first from the seeded stream, so two
    bundles of different kinds built with the same seed and generator
    config start from identical generator weights.
    """
    if kind not in KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    gen_config = gen_config or GeneratorConfig()
    gen_config.validate()
    if head_config is None:
        head_config = HeadConfig()
    if kind == "adg" and head_config.classifier_widths is None:
        if n_domains is None or n_domains < 1:
            raise ConfigError("adg bundle needs n_domains >= 1")
        head_config = HeadConfig(
            ssi_head_widths=head_config.ssi_head_widths,
            classifier_widths=CLASSIFIER_HIDDEN_WIDTHS + (n_domains,),
            grl_lambda=head_config.grl_lambda,
        )
    head_config.validate(kind)
    if n_features < 1:
        raise ConfigError("n_features must be >= 1")

    rng = np.random.default_rng(seed)
    generator = _init_generator(gen_config, n_features, rng)
    units = gen_config.units
    if kind == "baseline":
        ssi_head = _init_dense_stack((1,), units, rng)
    else:
        ssi_head = _init_dense_stack(head_config.ssi_head_widths, units, rng)
    classifier = None
    if kind == "adg":
        classifier = _init_dense_stack(head_config.classifier_widths, units, rng)
    return ModelBundle(
        kind=kind,
        gen_config=gen_config,
        head_config=head_config,
        n_features=n_features,
        generator=generator,
        ssi_head=ssi_head,
        classifier=classifier,
        irm_beta=1.0 if kind == "irm" else None,
    )


def _validate_batch(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != bundle.n_features:
        raise ShapeError(
            f"batch must be (B, T, {bundle.n_features}), got {x.shape}"
        )
    return x


def embed(bundle: ModelBundle, x) -> Tensor:
    """Generator embedding of a batch: last hidden state after the stack."""
    x = _validate_batch(bundle, x)
    t = Tensor(x)
    gen = bundle.generator
    for i in range(bundle.gen_config.n_pairs):
        t = lstm(t, gen[f"lstm{i}/wx"], gen[f"lstm{i}/wh"], gen[f"lstm{i}/b"])
        t = layer_norm(t, gen[f"ln{i}/gain"], gen[f"ln{i}/shift"])
    return last_timestep(t)


def _dense_stack_forward(pset: ParameterSet, n_layers: int, z: Tensor) -> Tensor:
    t = z
    for i in range(n_layers):
        act = "relu" if i < n_layers - 1 else "linear"
        t = dense(t, pset[f"dense{i}/w"], pset[f"dense{i}/b"], activation=act)
    return t


def ssi_from_embedding(bundle: ModelBundle, z: Tensor) -> Tensor:
    n_layers = 1 if bundle.kind == "baseline" else len(bundle.head_config.ssi_head_widths)
    return squeeze_width_one(_dense_stack_forward(bundle.ssi_head, n_layers, z))


def domain_logits_from_embedding(bundle: ModelBundle, z: Tensor,
                                 grl_lambda: Optional[float] = None) -> Tensor:
    if bundle.kind != "adg" or bundle.classifier is None:
        raise ConfigError(f"domain classifier requires an adg bundle, got {bundle.kind!r}")
    lam = bundle.head_config.grl_lambda if grl_lambda is None else grl_lambda
    reversed_z = gradient_reversal(z, lam)
    return _dense_stack_forward(
        bundle.classifier, len(bundle.head_config.classifier_widths), reversed_z)


def forward_ssi(bundle: ModelBundle, x) -> Tensor:
    """SSI prediction for a batch, shape (B,)."""
    return ssi_from_embedding(bundle, embed(bundle, x))


def forward_domain(bundle: ModelBundle, x, grl_lambda: Optional[float] = None) -> Tensor:
    """Domain logits for a batch (adg bundles only), shape (B, N_S)."""
    return domain_logits_from_embedding(bundle, embed(bundle, x), grl_lambda)


def predict_ssi(bundle: ModelBundle, x, batch_size: int = 1024) -> np.ndarray:
    """Inference over a possibly large batch, returned as a numpy array."""
    x = _validate_batch(bundle, x)
    outputs = []
    for lo in range(0, x.shape[0], batch_size):
        outputs.append(forward_ssi(bundle, x[lo:lo + batch_size]).data)
    return np.concatenate(outputs) if outputs else np.empty(0)


def embeddings(bundle: ModelBundle, x, batch_size: int = 1024) -> np.ndarray:
    """Generator embeddings for a possibly large batch, shape (B, units)."""
    x = _validate_batch(bundle, x)
    outputs = []
    for lo in range(0, x.shape[0], batch_size):
        outputs.append(embed(bundle, x[lo:lo + batch_size]).data)
    if not outputs:
        return np.empty((0, bundle.gen_config.units))
    return np.concatenate(outputs, axis=0)


def save_bundle(bundle: ModelBundle, directory) -> None:
    groups = {"generator": bundle.generator, "ssi_head": bundle.ssi_head}
    if bundle.classifier is not None:
        groups["classifier"] = bundle.classifier
    meta = {
        "kind": bundle.kind,
        "n_features": bundle.n_features,
        "hidden_layer_count": bundle.gen_config.hidden_layer_count,
        "units": bundle.gen_config.units,
        "regularization_coefficient": bundle.gen_config.regularization_coefficient,
        "ssi_head_widths": list(bundle.head_config.ssi_head_widths),
        "classifier_widths": (list(bundle.head_config.classifier_widths)
                              if bundle.head_config.classifier_widths else None),
        "grl_lambda": bundle.head_config.grl_lambda,
        "irm_beta": bundle.irm_beta,
    }
    _checkpoint.save_checkpoint(directory, groups, meta)


def load_bundle(directory) -> ModelBundle:
    groups, meta = _checkpoint.load_checkpoint(directory)
    try:
        kind = meta["kind"]
        gen_config = GeneratorConfig(
            hidden_layer_count=int(meta["hidden_layer_count"]),
            units=int(meta["units"]),
            regularization_coefficient=float(meta["regularization_coefficient"]),
        )
        head_config = HeadConfig(
            ssi_head_widths=tuple(meta["ssi_head_widths"]),
            classifier_widths=(tuple(meta["classifier_widths"])
                               if meta.get("classifier_widths") else None),
            grl_lambda=float(meta["grl_lambda"]),
        )
        bundle = ModelBundle(
            kind=kind,
            gen_config=gen_config,
            head_config=head_config,
            n_features=int(meta["n_features"]),
            generator=groups["generator"],
            ssi_head=groups["ssi_head"],
            classifier=groups.get("classifier"),
            irm_beta=meta.get("irm_beta"),
        )
    except KeyError as exc:
        raise ConfigError(f"checkpoint meta missing field {exc}") from exc
    if kind not in KINDS:
        raise ConfigError(f"checkpoint has unknown kind {kind!r}")
    if (bundle.classifier is not None) != (kind == "adg"):
        raise ConfigError("classifier presence inconsistent with bundle kind")
    if (bundle.irm_beta is not None) != (kind == "irm"):
        raise ConfigError("irm_beta presence inconsistent with bundle kind")
    if kind == "irm" and bundle.irm_beta != 1.0:
        raise ConfigError("irm_beta must be fixed at 1.0")
    return bundle
