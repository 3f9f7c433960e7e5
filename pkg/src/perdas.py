"""
Funções de perda do treino: predição (entropia cruzada binária), esparsidade
das tags de habilidade e regularização L2 das dificuldades.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from excecoes import ConfigError
from Tensor import Tensor, abs_, clip, log, sum_

# r̂ é limitado a [PROB_CLAMP, 1 - PROB_CLAMP] antes do log
PROB_CLAMP = 1e-7


@dataclass
class LossConfig:
    """Pesos das perdas: L = L_p + β·L_s + λ·L_c."""
    beta: float = 1.0
    lam: float = 1e-5
    phase: int = 1

    def __post_init__(self):
        if self.phase not in (1, 2):
            raise ConfigError(f"Fase deve ser 1 ou 2, recebido {self.phase}")
        if self.beta < 0 or self.lam < 0:
            raise ConfigError("beta e lam devem ser >= 0")

    @classmethod
    def for_phase(cls, cfg, phase: int) -> "LossConfig":
        """Pesos de um RunConfig: fase 1 usa cfg.beta, fase 2 usa cfg.beta_phase2."""
        beta = cfg.beta if phase == 1 else cfg.beta_phase2
        return cls(beta=beta, lam=cfg.lam, phase=phase)


def _mascara(mask, forma, dtype) -> np.ndarray:
    if mask is None:
        return np.ones(forma, dtype=dtype)
    return np.broadcast_to(np.asarray(mask, dtype=bool), forma).astype(dtype)


def loss_prediction(r_hat: Tensor, r, mask=None) -> Tuple[Tensor, float]:
    """
    Entropia cruzada binária somada sobre as posições não mascaradas.

    Returns:
        (soma, usada na otimização; média por posição real, para registro)
    """
    r = np.asarray(r, dtype=r_hat.dtype)
    m = _mascara(mask, r_hat.shape, r_hat.dtype)
    p = clip(r_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    por_posicao = -(log(p) * r + log(1.0 - p) * (1.0 - r))
    soma = sum_(por_posicao * m)
    n = float(m.sum())
    media = float(soma.values) / n if n > 0 else 0.0
    return soma, media


def loss_sparse(skill_tags: Tensor, mask=None) -> Tensor:
    """
    L_s = Σ (0.5 - |c - 0.5|) sobre alunos, posições reais e habilidades.
    Zero se e somente se todas as tags forem exatamente binárias.
    """
    termo = 0.5 - abs_(skill_tags - 0.5)
    if mask is not None:
        m = np.asarray(mask, dtype=skill_tags.dtype)[..., None]
        termo = termo * m
    return sum_(termo)


def loss_difficulty(u: Tensor) -> Tensor:
    """L_c = Σ μ² (inclui a dificuldade da questão de preenchimento)."""
    return sum_(u * u)


def total_loss(L_p: Tensor, L_s: Tensor, L_c: Tensor, config: LossConfig) -> Tensor:
    """L = L_p + β L_s + λ L_c; termos com peso 0 ficam fora do grafo."""
    total = L_p
    if config.beta != 0:
        total = total + L_s * config.beta
    if config.lam != 0:
        total = total + L_c * config.lam
    return total


def perdas_modelo(model, r_hat: Tensor, codificado, responses, config: LossConfig,
                  mask: Optional[np.ndarray] = None):
    """
    Calcula (L, L_p, média de L_p, L_s, L_c) para uma saída do QAKTModel.
    """
    mask = codificado.mask if mask is None else mask
    L_p, media = loss_prediction(r_hat, responses, mask)
    L_s = loss_sparse(codificado.skill_tags, mask)
    L_c = loss_difficulty(model.embedding.u)
    return total_loss(L_p, L_s, L_c, config), L_p, media, L_s, L_c
