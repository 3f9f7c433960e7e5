"""
Atenção monotônica com distância contextual e decaimento exponencial.

Três estágios compõem a pilha: codificador de questões (X → X'),
codificador de conhecimento (Y → Y') e recuperador de conhecimento
(consultas/chaves de X', valores de Y' → H). Os codificadores admitem
τ <= t; o recuperador admite apenas τ < t.
"""

import logging
from typing import List, Optional

import numpy as np

from AbstractModule import AbstractModule
from excecoes import ConfigError, ShapeError
from Tensor import (Tensor, constante, cumsum, exp, layer_norm, matmul, permute,
                    reshape, softmax_masked, take, transpose)

logger = logging.getLogger(__name__)

INCLUSIVE = "inclusive"
STRICT = "strict"
MASK_MODES = (INCLUSIVE, STRICT)

# exp(-θ·1) = 0.9 na inicialização
THETA_RAW_INIT = float(np.log(-np.log(0.9)))


def causal_mask(length: int, mask_mode: str) -> np.ndarray:
    """
    Máscara booleana l×l: True onde a chave τ é admissível para a consulta t.

    Raises:
        ConfigError: Se o modo for desconhecido
    """
    if mask_mode not in MASK_MODES:
        raise ConfigError(f"Modo de máscara desconhecido: {mask_mode}")
    k = 0 if mask_mode == INCLUSIVE else -1
    return np.tril(np.ones((length, length), dtype=bool), k=k)


def _mascara_softmax(length: int, mask_mode: str):
    """
    Máscara usada no softmax e as linhas com ao menos uma chave admissível.
    No modo estrito a linha t=0 não tem histórico: ela admite a posição 0
    só para o softmax ficar definido e depois é zerada.
    """
    mascara = causal_mask(length, mask_mode)
    linhas_validas = mascara.any(axis=-1)
    if mask_mode == STRICT and length > 0:
        mascara = mascara.copy()
        mascara[0, 0] = True
    return mascara, linhas_validas


def _distancias_posicionais(length: int) -> np.ndarray:
    posicoes = np.arange(length)
    return np.abs(posicoes[:, None] - posicoes[None, :]).astype(np.float64)


def context_distance(queries: Tensor, keys: Tensor, mask_mode: str,
                     track_gradient: bool = False) -> Tensor:
    """
    Δ(t, τ) = |t - τ| · Σ_{t'=τ+1..t} γ(t, t'), com γ o softmax de QKᵀ/√d_k
    sobre as chaves admissíveis.

    Por padrão Δ é uma constante no backward (Q e K desligados do grafo).

    Args:
        queries: (..., l, d_k)
        keys: (..., l, d_k)
        mask_mode: "inclusive" (τ <= t) ou "strict" (τ < t)
        track_gradient: Deixa o gradiente fluir por γ

    Returns:
        Tensor (..., l, l) com Δ >= 0, Δ(t, t) = 0 e suporte triangular inferior
    """
    if queries.shape != keys.shape:
        raise ShapeError(f"Consultas {queries.shape} e chaves {keys.shape} com formas diferentes")
    length = queries.shape[-2]
    if length == 0:
        raise ShapeError("Sequência de comprimento 0 na atenção")
    if not track_gradient:
        queries, keys = queries.detach(), keys.detach()

    mascara, linhas_validas = _mascara_softmax(length, mask_mode)
    escala = 1.0 / np.sqrt(queries.shape[-1])
    gamma = softmax_masked(matmul(queries, transpose(keys)) * escala, mascara)
    gamma = gamma * linhas_validas[:, None].astype(gamma.dtype)

    acumulado = cumsum(gamma, axis=-1)
    total = take(acumulado, np.array([length - 1]), axis=-1)
    peso = _distancias_posicionais(length) * np.tril(np.ones((length, length)))
    return (total - acumulado) * peso.astype(gamma.dtype)


def monotonic_weights(scores: Tensor, distance: Tensor, theta: Tensor, mask_mode: str) -> Tensor:
    """
    Pesos de atenção softmax(exp(-θΔ) ⊙ scores) sobre as chaves admissíveis.
    No modo estrito a primeira linha sai zerada (sem histórico).

    Args:
        scores: QKᵀ/√d_k, (..., l, l)
        distance: Δ, (..., l, l)
        theta: taxas de decaimento com broadcast para scores (θ > 0)
    """
    length = scores.shape[-1]
    mascara, linhas_validas = _mascara_softmax(length, mask_mode)
    decaimento = exp(-(distance * theta))
    pesos = softmax_masked(decaimento * scores, mascara)
    if mask_mode == STRICT:
        pesos = pesos * linhas_validas[:, None].astype(pesos.dtype)
    return pesos


class MonotonicAttention(AbstractModule):
    """
    Atenção multi-cabeça com decaimento monotônico.

    Cada cabeça h tem projeções próprias no seu subespaço: W_Q e W_K
    quadradas (d_h × d_h), W_V de (dim_value/h) para (dim_out/h), e uma
    taxa θ_h = exp(theta_raw_h).
    """

    def __init__(self, dim: int, heads: int, mask_mode: str,
                 dim_value: Optional[int] = None,
                 dim_out: Optional[int] = None,
                 distance_gradient: bool = False,
                 dtype=np.float32,
                 rng: Optional[np.random.Generator] = None):
        """
        Args:
            dim: Dimensão das consultas/chaves (entrada A)
            heads: Número de cabeças
            mask_mode: "inclusive" ou "strict"
            dim_value: Dimensão da entrada B (padrão: dim)
            dim_out: Dimensão da saída (padrão: dim_value)
            distance_gradient: Deixa o gradiente fluir pela distância contextual

        Raises:
            ConfigError: Se alguma dimensão não for divisível pelo número de cabeças
        """
        super().__init__(dim, dtype)
        if mask_mode not in MASK_MODES:
            raise ConfigError(f"Modo de máscara desconhecido: {mask_mode}")
        dim_value = dim if dim_value is None else dim_value
        dim_out = dim_value if dim_out is None else dim_out
        for nome, valor in (("dim", dim), ("dim_value", dim_value), ("dim_out", dim_out)):
            if heads <= 0 or valor % heads != 0:
                raise ConfigError(f"{nome}={valor} deve ser divisível por heads={heads}")

        self.heads = heads
        self.mask_mode = mask_mode
        self.dim_value = dim_value
        self.dim_out = dim_out
        self.distance_gradient = distance_gradient
        self.last_weights: Optional[np.ndarray] = None
        self.last_distance: Optional[np.ndarray] = None

        dh, dvh, doh = dim // heads, dim_value // heads, dim_out // heads
        self.W_Q = self._novo_parametro("W_Q", np.zeros((heads, dh, dh)))
        self.W_K = self._novo_parametro("W_K", np.zeros((heads, dh, dh)))
        self.W_V = self._novo_parametro("W_V", np.zeros((heads, dvh, doh)))
        self.theta_raw = self._novo_parametro("theta_raw", np.zeros(heads))
        self.reset_parameters(rng if rng is not None else np.random.default_rng(0))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        h = self.heads
        dh, dvh, doh = self._dim // h, self.dim_value // h, self.dim_out // h
        self.W_Q.values = self._glorot(rng, (h, dh, dh), dh, dh).astype(self._dtype)
        self.W_K.values = self._glorot(rng, (h, dh, dh), dh, dh).astype(self._dtype)
        self.W_V.values = self._glorot(rng, (h, dvh, doh), dvh, doh).astype(self._dtype)
        self.theta_raw.values = np.full(h, THETA_RAW_INIT, dtype=self._dtype)

    def theta(self) -> np.ndarray:
        return np.exp(self.theta_raw.values)

    def _dividir_cabecas(self, x: Tensor) -> Tensor:
        # (B, l, F) -> (B, h, l, F/h)
        lote, length, atributos = x.shape
        return permute(reshape(x, (lote, length, self.heads, atributos // self.heads)), (0, 2, 1, 3))

    def _juntar_cabecas(self, x: Tensor) -> Tensor:
        lote, heads, length, atributos = x.shape
        return reshape(permute(x, (0, 2, 1, 3)), (lote, length, heads * atributos))

    def forward(self, A: Tensor, B: Optional[Tensor] = None) -> Tensor:
        """
        monotonic_attention(A, B): Q = A W_Q, K = A W_K, V = B W_V por cabeça.

        Args:
            A: (lote, l, dim)
            B: (lote, l, dim_value); padrão A

        Returns:
            Tensor (lote, l, dim_out)

        Raises:
            ShapeError: Se l = 0 ou as formas não concordarem
        """
        B = A if B is None else B
        if A.ndim != 3 or B.ndim != 3:
            raise ShapeError(f"Atenção espera entradas (lote, l, atributos): {A.shape}, {B.shape}")
        if A.shape[1] == 0:
            raise ShapeError("Sequência de comprimento 0 na atenção")
        if A.shape[:2] != B.shape[:2]:
            raise ShapeError(f"A {A.shape} e B {B.shape} com lote/comprimento diferentes")
        self._validate_features(A, self._dim, "A")
        self._validate_features(B, self.dim_value, "B")

        Ah = self._dividir_cabecas(A)
        Bh = self._dividir_cabecas(B)
        Q = matmul(Ah, self.W_Q)
        K = matmul(Ah, self.W_K)
        V = matmul(Bh, self.W_V)

        delta = context_distance(Q, K, self.mask_mode, self.distance_gradient)
        theta = reshape(exp(self.theta_raw), (self.heads, 1, 1))
        scores = matmul(Q, transpose(K)) * (1.0 / np.sqrt(Q.shape[-1]))
        pesos = monotonic_weights(scores, delta, theta, self.mask_mode)

        self.last_weights = pesos.values
        self.last_distance = delta.values
        return self._juntar_cabecas(matmul(pesos, V))


class AttentionBlock(AbstractModule):
    """Atenção monotônica com conexão residual e LayerNorm: LN(R + atenção(A, B))."""

    def __init__(self, dim: int, heads: int, mask_mode: str,
                 dim_value: Optional[int] = None,
                 dim_out: Optional[int] = None,
                 distance_gradient: bool = False,
                 dtype=np.float32,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(dim, dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.attention = self._registrar("attention", MonotonicAttention(
            dim, heads, mask_mode, dim_value, dim_out, distance_gradient, dtype, rng))
        saida = self.attention.dim_out
        self.ln_gain = self._novo_parametro("ln_gain", np.ones(saida))
        self.ln_bias = self._novo_parametro("ln_bias", np.zeros(saida))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        self.attention.reset_parameters(rng)
        self.ln_gain.values = np.ones(self.ln_gain.shape, dtype=self._dtype)
        self.ln_bias.values = np.zeros(self.ln_bias.shape, dtype=self._dtype)

    def forward(self, A: Tensor, B: Optional[Tensor] = None, residual: Optional[Tensor] = None) -> Tensor:
        residual = A if residual is None else residual
        return layer_norm(residual + self.attention(A, B), self.ln_gain, self.ln_bias)


class AttentionStack(AbstractModule):
    """
    Pilha completa: codificador de questões, codificador de conhecimento e
    recuperador, cada um com n_blocks blocos.

    retriever_value:
        "nonsquare": W_V do recuperador leva o subespaço 2D/h para D/h
        "preproject": Y' é projetado para D (W_pre) antes do recuperador
    """

    def __init__(self, dim: int, heads: int = 8, n_blocks: int = 1,
                 retriever_value: str = "nonsquare",
                 distance_gradient: bool = False,
                 dtype=np.float32,
                 rng: Optional[np.random.Generator] = None):
        super().__init__(dim, dtype)
        if n_blocks <= 0:
            raise ConfigError(f"n_blocks deve ser > 0, recebido {n_blocks}")
        if retriever_value not in ("nonsquare", "preproject"):
            raise ConfigError(f"retriever_value inválido: {retriever_value}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.heads = heads
        self.n_blocks = n_blocks
        self.retriever_value = retriever_value

        d = dim
        self.question_encoder: List[AttentionBlock] = []
        self.knowledge_encoder: List[AttentionBlock] = []
        self.retriever: List[AttentionBlock] = []
        for i in range(n_blocks):
            self.question_encoder.append(self._registrar(
                f"question_encoder{i}", AttentionBlock(d, heads, INCLUSIVE, d, d, distance_gradient, dtype, rng)))
            self.knowledge_encoder.append(self._registrar(
                f"knowledge_encoder{i}",
                AttentionBlock(2 * d, heads, INCLUSIVE, 2 * d, 2 * d, distance_gradient, dtype, rng)))
            valor = 2 * d if retriever_value == "nonsquare" else d
            self.retriever.append(self._registrar(
                f"retriever{i}", AttentionBlock(d, heads, STRICT, valor, d, distance_gradient, dtype, rng)))
        if retriever_value == "preproject":
            self.W_pre = self._novo_parametro("W_pre", np.zeros((2 * d, d)))
        self._reset_proprios(rng)

    def _reset_proprios(self, rng: np.random.Generator) -> None:
        if self.retriever_value == "preproject":
            d = self._dim
            self.W_pre.values = self._glorot(rng, (2 * d, d), 2 * d, d).astype(self._dtype)

    def reset_parameters(self, rng: np.random.Generator) -> None:
        for bloco in self.question_encoder + self.knowledge_encoder + self.retriever:
            bloco.reset_parameters(rng)
        self._reset_proprios(rng)

    def forward(self, X: Tensor, Y: Tensor) -> Tensor:
        """
        forward_stack(X, Y) -> H.

        Args:
            X: embeddings das questões (lote, l, D)
            Y: embeddings das respostas (lote, l, 2D)

        Returns:
            H: estados de conhecimento (lote, l, D); H(t) depende só de
            X(1..t) e Y(1..t-1)
        """
        self._validate_features(X, self._dim, "X")
        self._validate_features(Y, 2 * self._dim, "Y")

        x_linha = X
        for bloco in self.question_encoder:
            x_linha = bloco(x_linha)
        y_linha = Y
        for bloco in self.knowledge_encoder:
            y_linha = bloco(y_linha)
        if self.retriever_value == "preproject":
            y_linha = matmul(y_linha, self.W_pre)

        H = x_linha
        for bloco in self.retriever:
            H = bloco(H, y_linha)
        return H

    forward_stack = forward
