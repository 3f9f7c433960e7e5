from typing import Optional

import numpy as np

from AbstractModule import AbstractModule
from excecoes import ShapeError
from Tensor import Tensor, concat, dropout, layer_norm, matmul, relu, reshape, sigmoid


class PredictionNetwork(AbstractModule):
    """
    Rede de predição: [H ∥ X] (2D) → D → D/2 → 1 → sigmoid.

    Cada uma das três camadas aplica LayerNorm, camada totalmente conectada
    e dropout; ReLU entre as camadas ocultas. Na última o dropout atua sobre
    o logit: uma posição descartada sai com r̂ = 0.5.
    """

    def __init__(self, dim: int, dropout_rate: float = 0.05, dtype=np.float32,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(dim, dtype)
        self.dropout_rate = dropout_rate
        self.dims = [2 * dim, dim, max(dim // 2, 1), 1]
        for i, (entrada, saida) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            self._novo_parametro(f"ln{i}_gain", np.ones(entrada))
            self._novo_parametro(f"ln{i}_bias", np.zeros(entrada))
            self._novo_parametro(f"W{i}", np.zeros((entrada, saida)))
            self._novo_parametro(f"b{i}", np.zeros(saida))
        self.reset_parameters(rng if rng is not None else np.random.default_rng(0))

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def reset_parameters(self, rng: np.random.Generator) -> None:
        for i, (entrada, saida) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            self._params[f"ln{i}_gain"].values = np.ones(entrada, dtype=self._dtype)
            self._params[f"ln{i}_bias"].values = np.zeros(entrada, dtype=self._dtype)
            self._params[f"W{i}"].values = self._glorot(rng, (entrada, saida), entrada, saida).astype(self._dtype)
            self._params[f"b{i}"].values = np.zeros(saida, dtype=self._dtype)

    def forward(self, H: Tensor, X: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        """
        predict(H, X): probabilidade de acerto em cada posição.

        Args:
            H: estados de conhecimento (lote, l, D)
            X: embeddings das questões (lote, l, D)
            rng: gerador do dropout (modo de treino)

        Returns:
            r̂ com forma (lote, l), valores em (0, 1)

        Raises:
            ShapeError: Se H e X não tiverem a mesma forma (..., D)
        """
        if H.shape != X.shape:
            raise ShapeError(f"H {H.shape} e X {X.shape} devem ter a mesma forma")
        self._validate_features(H, self._dim, "H")

        z = concat([H, X], axis=-1)
        for i in range(self.n_layers):
            z = layer_norm(z, self._params[f"ln{i}_gain"], self._params[f"ln{i}_bias"])
            z = matmul(z, self._params[f"W{i}"]) + self._params[f"b{i}"]
            if i < self.n_layers - 1:
                z = relu(z)
            z = dropout(z, self.dropout_rate, self.training, rng)
        return sigmoid(reshape(z, z.shape[:-1]))

    predict = forward
