import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Set, Tuple, Union

import numpy as np

from AbstractModule import AbstractModule
from excecoes import ConfigError
from ExerciseEmbedding import FROZEN_BINARY, EncodedBatch, ExerciseEmbedding
from MonotonicAttention import AttentionStack
from PredictionNetwork import PredictionNetwork
from QMatrix import QMatrix
from Tensor import DTYPES, Tensor

logger = logging.getLogger(__name__)


@dataclass
class ModelParams:
    """
    Todos os tensores treináveis do modelo, por nome qualificado
    (`embedding.W_p`, `attention.retriever0.attention.W_V`, ...),
    e o conjunto de nomes congelados.
    """
    tensors: Dict[str, Tensor]
    frozen: Set[str] = field(default_factory=set)

    def trainable(self) -> Dict[str, Tensor]:
        return {nome: t for nome, t in self.tensors.items() if nome not in self.frozen}

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Cópia dos valores atuais."""
        return {nome: t.values.copy() for nome, t in self.tensors.items()}

    def restore(self, valores: Dict[str, np.ndarray]) -> None:
        for nome, t in self.tensors.items():
            if nome in valores:
                t.values = np.array(valores[nome], dtype=t.dtype)

    def norms(self) -> Dict[str, float]:
        return {nome: float(np.linalg.norm(t.values)) for nome, t in self.tensors.items()}


class QAKTModel(AbstractModule):
    """
    Modelo completo: embedding de exercícios, pilha de atenção monotônica e
    rede de predição.
    """

    def __init__(self, n_skills: int, n_questions: int, dim: int = 64, heads: int = 8,
                 n_blocks: int = 1,
                 embedding_dropout: float = 0.05,
                 prediction_dropout: float = 0.05,
                 no_act: bool = False,
                 no_avg: bool = False,
                 no_ln: bool = False,
                 mu_both_halves: bool = True,
                 response_layer_norm: str = "joint",
                 distance_gradient: bool = False,
                 retriever_value: str = "nonsquare",
                 dtype=np.float32,
                 seed: int = 0):
        super().__init__(dim, dtype)
        rng = np.random.default_rng(seed)
        self.n_skills = n_skills
        self.n_questions = n_questions
        self.embedding = self._registrar("embedding", ExerciseEmbedding(
            n_skills, n_questions, dim, embedding_dropout, no_act, no_avg, no_ln,
            mu_both_halves, response_layer_norm, dtype, rng))
        self.attention = self._registrar("attention", AttentionStack(
            dim, heads, n_blocks, retriever_value, distance_gradient, dtype, rng))
        self.prediction = self._registrar("prediction", PredictionNetwork(
            dim, prediction_dropout, dtype, rng))

    @classmethod
    def from_config(cls, cfg, n_questions: Optional[int] = None, seed: Optional[int] = None,
                    n_skills: Optional[int] = None) -> "QAKTModel":
        """Constrói o modelo a partir de um RunConfig (n_questions vem dos dados quando omitido)."""
        m = n_questions if n_questions is not None else cfg.n_questions
        if m is None:
            raise ConfigError("Número de questões desconhecido: informe n_questions")
        return cls(n_skills=cfg.n_skills if n_skills is None else n_skills,
                   n_questions=m, dim=cfg.dim, heads=cfg.heads, n_blocks=cfg.n_blocks,
                   embedding_dropout=cfg.embedding_dropout,
                   prediction_dropout=cfg.prediction_dropout,
                   no_act=cfg.no_act, no_avg=cfg.no_avg, no_ln=cfg.no_ln,
                   mu_both_halves=cfg.mu_both_halves,
                   response_layer_norm=cfg.response_layer_norm,
                   distance_gradient=cfg.distance_gradient,
                   retriever_value=cfg.retriever_value,
                   dtype=DTYPES[cfg.precision],
                   seed=cfg.seed if seed is None else seed)

    def reset_parameters(self, rng: np.random.Generator) -> None:
        """Reinicializa tudo; uma q-matrix fixa continua fixa."""
        self.embedding.reset_parameters(rng)
        self.attention.reset_parameters(rng)
        self.prediction.reset_parameters(rng)

    def model_params(self) -> ModelParams:
        frozen = {"embedding." + nome for nome in self.embedding.frozen_parameters()}
        return ModelParams(self.parameters(), frozen)

    def inject(self, qmatrix: Union[QMatrix, np.ndarray]) -> None:
        """
        Fixa a q-matrix (aprendida ou de especialista) no modo frozen-binary.

        Raises:
            ConfigError: Se a forma não for N×M
        """
        entries = qmatrix.entries if isinstance(qmatrix, QMatrix) else np.asarray(qmatrix)
        self.embedding.freeze_qmatrix(entries)
        logger.info("Q-matrix fixa injetada (%d×%d, densidade %.3f)",
                    entries.shape[0], entries.shape[1], float(np.mean(entries)))

    @property
    def qmatrix_frozen(self) -> bool:
        return self.embedding.mode == FROZEN_BINARY

    def relevance(self) -> np.ndarray:
        return self.embedding.export_relevance()

    def forward(self, questions, responses, mask=None,
                rng: Optional[np.random.Generator] = None) -> Tuple[Tensor, EncodedBatch]:
        """
        Args:
            questions: (lote, l) índices em [0, M]
            responses: (lote, l) em {0, 1}
            mask: True nas posições reais
            rng: gerador do dropout em modo de treino

        Returns:
            (r̂ com forma (lote, l), EncodedBatch com X, Y, máscara e tags)
        """
        codificado = self.embedding(questions, responses, mask, rng)
        H = self.attention(codificado.X, codificado.Y)
        r_hat = self.prediction(H, codificado.X, rng)
        return r_hat, codificado

    def predict_proba(self, questions, responses, mask=None) -> np.ndarray:
        """Probabilidades em modo de avaliação (sem dropout)."""
        modo = self.training
        self.eval()
        try:
            r_hat, _ = self.forward(questions, responses, mask)
        finally:
            self.train(modo)
        return np.array(r_hat.values, dtype=np.float64)
