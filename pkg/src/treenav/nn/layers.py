"""Dense stacks with SELU activations and inverted dropout."""

from __future__ import annotations

import numpy as np

from . import autograd as ag


class DimensionMismatch(ValueError):
    pass


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype=np.float64):
        # LeCun-normal init pairs with the self-normalizing activation
        std = 1.0 / np.sqrt(in_dim)
        self.weight = ag.parameter(rng.normal(0.0, std, size=(in_dim, out_dim)).astype(dtype))
        self.bias = ag.parameter(np.zeros(out_dim, dtype=dtype))

    def __call__(self, x: ag.Tensor) -> ag.Tensor:
        if x.data.shape[-1] != self.weight.data.shape[0]:
            raise DimensionMismatch(
                f"input dim {x.data.shape[-1]} != layer dim {self.weight.data.shape[0]}"
            )
        return ag.linear(x, self.weight, self.bias)

    def parameters(self) -> list[ag.Tensor]:
        return [self.weight, self.bias]


class Mlp:
    """Hidden layers with optional SELU and dropout after each; optional raw
    output layer. Dropout draws from the rng stream passed per call."""

    def __init__(
        self,
        in_dim: int,
        hidden: list[int],
        rng: np.random.Generator,
        out_dim: int | None = None,
        activation: str = "selu",
        dropout_rate: float = 0.25,
        dtype=np.float64,
    ):
        self.hidden_layers: list[Dense] = []
        self.activation = activation
        self.dropout_rate = dropout_rate
        last = in_dim
        for width in hidden:
            self.hidden_layers.append(Dense(last, width, rng, dtype))
            last = width
        self.output_layer = Dense(last, out_dim, rng, dtype) if out_dim is not None else None
        self.out_dim = out_dim if out_dim is not None else last

    def __call__(
        self, x: ag.Tensor, train: bool = False, rng: np.random.Generator | None = None
    ) -> ag.Tensor:
        for layer in self.hidden_layers:
            x = layer(x)
            if self.activation == "selu":
                x = ag.selu(x)
            x = ag.dropout(x, self.dropout_rate, rng, train)
        if self.output_layer is not None:
            x = self.output_layer(x)
        return x

    def parameters(self) -> list[ag.Tensor]:
        params = [p for layer in self.hidden_layers for p in layer.parameters()]
        if self.output_layer is not None:
            params.extend(self.output_layer.parameters())
        return params
