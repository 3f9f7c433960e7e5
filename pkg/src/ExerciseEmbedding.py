import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from AbstractModule import AbstractModule
from excecoes import ConfigError, DataError
from Tensor import (Tensor, concat, constante, div, dropout, layer_norm, matmul, relu,
                    reshape, sigmoid, sum_, take, transpose)

logger = logging.getLogger(__name__)

TRAINABLE = "trainable"
FROZEN_BINARY = "frozen-binary"


@dataclass
class EncodedBatch:
    """
    Saída do embedding para um lote de sequências (layout (lote, l, atributos)).

    X: embeddings das questões, (B, l, D)
    Y: embeddings das respostas, (B, l, 2D)
    mask: True nas posições reais (não preenchidas), (B, l)
    skill_tags: vetores c_q de cada posição, (B, l, N); entram na perda esparsa
    """
    X: Tensor
    Y: Tensor
    mask: np.ndarray
    skill_tags: Tensor


class ExerciseEmbedding(AbstractModule):
    """
    Representação de questões e respostas a partir da tabela de relevância
    questão-habilidade P, dos embeddings de habilidade E/d e das dificuldades
    de Rasch u.

    A questão de preenchimento q0 tem seu próprio vetor de tags treinável
    (sigmoid(w_pad)); as questões reais 1..M usam as colunas de P.
    """

    def __init__(self, n_skills: int, n_questions: int, dim: int,
                 dropout_rate: float = 0.05,
                 no_act: bool = False,
                 no_avg: bool = False,
                 no_ln: bool = False,
                 mu_both_halves: bool = True,
                 response_layer_norm: str = "joint",
                 dtype=np.float32,
                 rng: Optional[np.random.Generator] = None):
        """
        Args:
            n_skills: Número de habilidades assumidas N
            n_questions: Número de questões reais M (índices 1..M; 0 = preenchimento)
            dim: Dimensão de embedding D
            dropout_rate: Dropout após cada cálculo que envolve E
            no_act, no_avg, no_ln: Ablações (sem ReLU, sem média, sem LayerNorm)
            mu_both_halves: Soma a dificuldade às duas metades da resposta
            response_layer_norm: "joint" (sobre 2D) ou "per-half" (cada metade)

        Raises:
            ConfigError: Se N ou M forem inválidos
        """
        super().__init__(dim, dtype)
        if n_skills <= 0 or n_questions <= 0:
            raise ConfigError(f"N e M devem ser > 0 (N={n_skills}, M={n_questions})")
        if response_layer_norm not in ("joint", "per-half"):
            raise ConfigError(f"response_layer_norm inválido: {response_layer_norm}")

        self.n_skills = n_skills
        self.n_questions = n_questions
        self.dropout_rate = dropout_rate
        self.no_act = no_act
        self.no_avg = no_avg
        self.no_ln = no_ln
        self.mu_both_halves = mu_both_halves
        self.response_layer_norm = response_layer_norm
        self.mode = TRAINABLE
        self._q_fixa: Optional[np.ndarray] = None

        d = dim
        self.W_p = self._novo_parametro("W_p", np.zeros((n_skills, n_questions)))
        self.w_pad = self._novo_parametro("w_pad", np.zeros(n_skills))
        self.E = self._novo_parametro("E", np.zeros((d, n_skills)))
        self.d = self._novo_parametro("d", np.zeros(d))
        self.u = self._novo_parametro("u", np.zeros(n_questions + 1))
        if not no_ln:
            self.ln_x_gain = self._novo_parametro("ln_x_gain", np.ones(d))
            self.ln_x_bias = self._novo_parametro("ln_x_bias", np.zeros(d))
            forma_y = (2 * d,) if response_layer_norm == "joint" else (2, d)
            self.ln_y_gain = self._novo_parametro("ln_y_gain", np.ones(forma_y))
            self.ln_y_bias = self._novo_parametro("ln_y_bias", np.zeros(forma_y))

        self.reset_parameters(rng if rng is not None else np.random.default_rng(0))

    def reset_parameters(self, rng: np.random.Generator) -> None:
        """W_p, w_pad ~ U(-1, 1); E Glorot; d = 0; u = 0; LayerNorm com ganho 1 e viés 0."""
        n, m, d = self.n_skills, self.n_questions, self._dim
        self.W_p.values = rng.uniform(-1.0, 1.0, size=(n, m)).astype(self._dtype)
        self.w_pad.values = rng.uniform(-1.0, 1.0, size=n).astype(self._dtype)
        self.E.values = self._glorot(rng, (d, n), n, d).astype(self._dtype)
        self.d.values = np.zeros(d, dtype=self._dtype)
        self.u.values = np.zeros(m + 1, dtype=self._dtype)
        if not self.no_ln:
            for nome in ("ln_x_gain", "ln_y_gain"):
                t = self._params[nome]
                t.values = np.ones(t.shape, dtype=self._dtype)
            for nome in ("ln_x_bias", "ln_y_bias"):
                t = self._params[nome]
                t.values = np.zeros(t.shape, dtype=self._dtype)

    # Q-matrix

    def freeze_qmatrix(self, entries: np.ndarray) -> None:
        """
        Fixa P nos valores binários dados (modo frozen-binary). W_p deixa de
        receber gradiente e não é usado.

        Raises:
            ConfigError: Se a forma não for N×M ou os valores não forem 0/1
        """
        entries = np.asarray(entries)
        if entries.shape != (self.n_skills, self.n_questions):
            raise ConfigError(f"Q-matrix {entries.shape} incompatível com N×M = "
                              f"{(self.n_skills, self.n_questions)}")
        if not np.all((entries == 0) | (entries == 1)):
            raise ConfigError("Q-matrix fixa deve ser binária")
        vazias = np.flatnonzero(entries.sum(axis=0) == 0)
        if vazias.size:
            logger.warning("Q-matrix fixa com %d questões sem habilidade", vazias.size)
        self._q_fixa = entries.astype(self._dtype)
        self.mode = FROZEN_BINARY

    @property
    def fixed_qmatrix(self) -> Optional[np.ndarray]:
        """Q-matrix binária fixa (None no modo treinável)."""
        return None if self._q_fixa is None else self._q_fixa.astype(np.int8)

    def frozen_parameters(self):
        """Nomes (locais) dos parâmetros que o otimizador não deve tocar."""
        return {"W_p"} if self.mode == FROZEN_BINARY else set()

    def relevance(self) -> Tensor:
        """
        Tabela de relevância P (N×M): sigmoid(W_p) no modo treinável,
        a q-matrix fixa (sem gradiente) no modo frozen-binary.
        """
        if self.mode == FROZEN_BINARY:
            return constante(self._q_fixa)
        return sigmoid(self.W_p)

    def full_table(self, P: Optional[Tensor] = None) -> Tensor:
        """[tags de q0 | P]: N×(M+1), coluna 0 = questão de preenchimento."""
        P = self.relevance() if P is None else P
        pad = reshape(sigmoid(self.w_pad), (self.n_skills, 1))
        return concat([pad, P], axis=1)

    def skill_tags(self, tabela: Tensor, q) -> Tensor:
        """
        c_q = P δ(q): coluna q da tabela completa, para cada índice em q.

        Returns:
            Tensor de forma q.shape + (N,)

        Raises:
            IndexError: Se algum índice estiver fora de [0, M]
        """
        q = np.asarray(q, dtype=np.int64)
        if q.size and (q.min() < 0 or q.max() > self.n_questions):
            raise IndexError(f"Índice de questão inválido: deve estar entre 0 e {self.n_questions}")
        return take(transpose(tabela), q, axis=0)

    def skill_encoding(self, c: Tensor) -> Tensor:
        """
        k_q = ReLU(E c + d) / max(Σ_j c_j, 1e-8).
        NoAct remove o ReLU; NoAvg remove a divisão.
        """
        vetor = c.ndim == 1
        if vetor:
            c = reshape(c, (1, c.shape[0]))
        k = matmul(c, transpose(self.E)) + self.d
        if not self.no_act:
            k = relu(k)
        if not self.no_avg:
            k = div(k, sum_(c, axis=-1, keepdims=True))
        if vetor:
            k = reshape(k, (self._dim,))
        return k

    def _dificuldade(self, q: np.ndarray) -> Tensor:
        mu = take(self.u, q, axis=0)
        return reshape(mu, q.shape + (1,))

    def encode_question(self, q, rng: Optional[np.random.Generator] = None,
                        tabela: Optional[Tensor] = None) -> Tensor:
        """x = LayerNorm(k_q + μ_q); NoLN: x = k_q + μ_q."""
        q = np.asarray(q, dtype=np.int64)
        tabela = self.full_table() if tabela is None else tabela
        k = self.skill_encoding(self.skill_tags(tabela, q))
        k = dropout(k, self.dropout_rate, self.training, rng)
        z = k + self._dificuldade(q)
        if self.no_ln:
            return z
        return layer_norm(z, self.ln_x_gain, self.ln_x_bias)

    def encode_response(self, q, r, rng: Optional[np.random.Generator] = None,
                        tabela: Optional[Tensor] = None) -> Tensor:
        """
        y = LayerNorm([k_pos + μ ∥ k_neg + μ]).

        A metade ativa (pos se r=1, neg se r=0) usa δ(q); a inativa usa δ(q0).

        Raises:
            DataError: Se alguma resposta não for 0 ou 1
        """
        q = np.asarray(q, dtype=np.int64)
        r = np.asarray(r)
        if r.shape != q.shape:
            raise DataError(f"Respostas {r.shape} e questões {q.shape} com formas diferentes")
        if not np.all((r == 0) | (r == 1)):
            raise DataError("Respostas devem ser 0 ou 1")
        r = r.astype(np.int64)
        tabela = self.full_table() if tabela is None else tabela

        q_pos = q * r
        q_neg = q * (1 - r)
        k_pos = dropout(self.skill_encoding(self.skill_tags(tabela, q_pos)), self.dropout_rate, self.training, rng)
        k_neg = dropout(self.skill_encoding(self.skill_tags(tabela, q_neg)), self.dropout_rate, self.training, rng)

        mu = self._dificuldade(q)
        if self.mu_both_halves:
            z = concat([k_pos + mu, k_neg + mu], axis=-1)
        else:
            ativo = r.reshape(r.shape + (1,)).astype(self._dtype)
            z = concat([k_pos + mu * ativo, k_neg + mu * (1.0 - ativo)], axis=-1)

        if self.no_ln:
            return z
        if self.response_layer_norm == "joint":
            return layer_norm(z, self.ln_y_gain, self.ln_y_bias)
        metades = reshape(z, q.shape + (2, self._dim))
        y = layer_norm(metades, self.ln_y_gain, self.ln_y_bias)
        return reshape(y, q.shape + (2 * self._dim,))

    def forward(self, questions, responses, mask=None, rng: Optional[np.random.Generator] = None) -> EncodedBatch:
        """
        encode_batch: aplica encode_question/encode_response em cada posição.

        Args:
            questions: índices (B, l) em [0, M]
            responses: respostas (B, l) em {0, 1}
            mask: True nas posições reais (padrão: questions > 0)
            rng: gerador do dropout (obrigatório em modo de treino com dropout)
        """
        questions = np.asarray(questions, dtype=np.int64)
        if mask is None:
            mask = questions > 0
        tabela = self.full_table()
        c = self.skill_tags(tabela, questions)
        X = self.encode_question(questions, rng, tabela)
        Y = self.encode_response(questions, responses, rng, tabela)
        return EncodedBatch(X=X, Y=Y, mask=np.asarray(mask, dtype=bool), skill_tags=c)

    encode_batch = forward

    def export_relevance(self) -> np.ndarray:
        """Valores atuais de P (N×M) como array."""
        return np.array(self.relevance().values, dtype=np.float64)
