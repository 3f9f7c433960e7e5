"""
Binarização da tabela de relevância P aprendida na primeira fase.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from excecoes import ConfigError
from QMatrix import QMatrix

logger = logging.getLogger(__name__)

THRESHOLD_GE = "threshold-ge"
THRESHOLD_LT = "threshold-lt"
SKILL_ROW = "skill-row"
QUESTION_COLUMN = "question-column"

DEFAULT_AXIS = {THRESHOLD_GE: QUESTION_COLUMN, THRESHOLD_LT: SKILL_ROW}


@dataclass
class BinarizationConfig:
    """
    eta: fator do limiar (0 < η <= 1)
    rule: "threshold-ge" (P >= η·max vira 1) ou "threshold-lt" (P < η·max vira 1)
    axis: eixo do máximo, "skill-row" (por habilidade) ou "question-column" (por questão);
        None escolhe o eixo da regra: skill-row para threshold-lt, question-column para threshold-ge
    guarantee_min_one_skill: toda questão sem habilidade recebe a de maior P;
        None liga a garantia em threshold-ge e a desliga em threshold-lt, que
        fica exatamente "P < η·max da linha"
    """
    eta: float = 0.99
    rule: str = THRESHOLD_GE
    axis: Optional[str] = None
    guarantee_min_one_skill: Optional[bool] = None

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ConfigError(f"eta deve estar em (0, 1], recebido {self.eta}")
        if self.rule not in (THRESHOLD_GE, THRESHOLD_LT):
            raise ConfigError(f"Regra de binarização desconhecida: {self.rule}")
        if self.axis is None:
            self.axis = DEFAULT_AXIS[self.rule]
        if self.guarantee_min_one_skill is None:
            self.guarantee_min_one_skill = self.rule == THRESHOLD_GE
        if self.axis not in (SKILL_ROW, QUESTION_COLUMN):
            raise ConfigError(f"Eixo de binarização desconhecido: {self.axis}")

    @classmethod
    def from_run_config(cls, cfg) -> "BinarizationConfig":
        return cls(eta=cfg.eta, rule=cfg.binarize_rule, axis=cfg.binarize_axis,
                   guarantee_min_one_skill=cfg.guarantee_min_one_skill)


def binarize(P, config: Optional[BinarizationConfig] = None,
             question_ids: Optional[Sequence[str]] = None) -> QMatrix:
    """
    Converte P (N×M, valores em (0, 1)) numa q-matrix binária.

    Args:
        P: tabela de relevância, linha = habilidade, coluna = questão
        config: regra, eixo, η e garantia de ao menos uma habilidade; aceita
            também um RunConfig
        question_ids: ids das questões para a QMatrix resultante

    Returns:
        QMatrix N×M
    """
    if config is None:
        config = BinarizationConfig()
    elif not isinstance(config, BinarizationConfig):
        config = BinarizationConfig.from_run_config(config)
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise ConfigError(f"P deve ser 2D, recebido forma {P.shape}")

    eixo = 1 if config.axis == SKILL_ROW else 0
    limiar = config.eta * P.max(axis=eixo, keepdims=True)
    if config.rule == THRESHOLD_GE:
        Q = (P >= limiar).astype(np.int8)
    else:
        Q = (P < limiar).astype(np.int8)

    if config.guarantee_min_one_skill:
        vazias = np.flatnonzero(Q.sum(axis=0) == 0)
        if vazias.size:
            # argmax devolve o menor índice em caso de empate
            Q[np.argmax(P[:, vazias], axis=0), vazias] = 1
            logger.info("Binarização: %d questões sem habilidade receberam a de maior relevância", vazias.size)

    logger.debug("Binarização (%s, %s, η=%g): densidade %.3f", config.rule, config.axis, config.eta, Q.mean())
    return QMatrix(Q, question_ids=question_ids)
