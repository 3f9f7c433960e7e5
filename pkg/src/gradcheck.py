"""
Verificação de gradientes por diferenças finitas centrais.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Tuple

import numpy as np

from excecoes import ConfigError
from Tensor import Tensor

logger = logging.getLogger(__name__)

# Coordenadas mínimas por tensor na verificação do modelo completo
AMOSTRA_MINIMA = 100


@dataclass
class GradCheckReport:
    """Resultado da verificação: erro máximo, erro por parâmetro e coordenadas que falharam."""
    tolerance: float
    step: float
    max_rel_error: float = 0.0
    por_parametro: Dict[str, float] = field(default_factory=dict)
    falhas: List[Tuple[str, Tuple[int, ...], float, float, float]] = field(default_factory=list)
    cobertura: Dict[str, Tuple[int, int]] = field(default_factory=dict)
    avaliados: int = 0

    @property
    def ok(self) -> bool:
        return not self.falhas

    def texto(self) -> str:
        linhas = [
            f"gradcheck: {'OK' if self.ok else 'FALHOU'}",
            f"passo: {self.step:g}",
            f"tolerancia: {self.tolerance:g}",
            f"coordenadas avaliadas: {self.avaliados}",
            f"erro relativo maximo: {self.max_rel_error:.3e}",
        ]
        for nome, erro in self.por_parametro.items():
            linhas.append(f"  {nome}: {erro:.3e}")
        for nome, idx, analitico, numerico, erro in self.falhas[:20]:
            linhas.append(f"  FALHA {nome}{list(idx)}: autodiff={analitico:.6e} "
                          f"numerico={numerico:.6e} erro={erro:.3e}")
        if len(self.falhas) > 20:
            linhas.append(f"  ... mais {len(self.falhas) - 20} falhas")
        return "\n".join(linhas)


def erro_relativo(analitico: float, numerico: float, piso: float = 1e-6) -> float:
    return abs(analitico - numerico) / max(abs(analitico), abs(numerico), piso)


def grad_check(f: Callable[[], Tensor],
               params: Mapping[str, Tensor],
               step: float = 1e-3,
               tolerance: float = 1e-4,
               amostra: int = 100,
               seed: int = 0) -> GradCheckReport:
    """
    Compara o gradiente do autodiff com diferenças finitas centrais.

    `f` deve ser determinística (dropout desligado, entradas fixas) e
    devolver um escalar. Tensores com mais de `amostra` elementos são
    verificados numa amostra aleatória de `amostra` coordenadas.

    Args:
        f: constrói o grafo e devolve a saída escalar
        params: nome -> Tensor folha (de preferência float64)
        step: passo h da diferença (f(x+h) - f(x-h)) / 2h
        tolerance: erro relativo máximo aceito
        amostra: coordenadas por tensor quando ele for grande
        seed: semente da amostragem

    Returns:
        GradCheckReport (nunca levanta por causa de divergências)
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
        if p.dtype != np.float64:
            logger.warning("Parâmetro %s em %s; gradcheck deveria usar float64", p.name, p.dtype)

    saida = f()
    saida.backward()
    analiticos = {nome: (np.zeros_like(p.values) if p.grad is None else p.grad.copy())
                  for nome, p in params.items()}

    relatorio = GradCheckReport(tolerance=tolerance, step=step)
    for nome, p in params.items():
        n = p.values.size
        if n <= amostra:
            coordenadas = np.arange(n)
        else:
            coordenadas = np.sort(rng.choice(n, size=amostra, replace=False))
        pior = 0.0
        for plano in coordenadas:
            original = p.values.flat[plano]
            p.values.flat[plano] = original + step
            f_mais = float(f().values)
            p.values.flat[plano] = original - step
            f_menos = float(f().values)
            p.values.flat[plano] = original

            numerico = (f_mais - f_menos) / (2.0 * step)
            analitico = float(analiticos[nome].flat[plano])
            erro = erro_relativo(analitico, numerico)
            pior = max(pior, erro)
            relatorio.avaliados += 1
            if erro > tolerance:
                idx = tuple(int(i) for i in np.unravel_index(plano, p.shape))
                relatorio.falhas.append((nome, idx, analitico, numerico, erro))
        relatorio.por_parametro[nome] = pior
        relatorio.cobertura[nome] = (len(coordenadas), n)
        relatorio.max_rel_error = max(relatorio.max_rel_error, pior)

    logger.info("gradcheck: %d coordenadas, erro máximo %.3e", relatorio.avaliados, relatorio.max_rel_error)
    return relatorio


def check_full_model(seed: int = 0, step: float = 1e-5, tolerance: float = 1e-3,
                     amostra: int = AMOSTRA_MINIMA, dim: int = 8, heads: int = 2, n_skills: int = 3,
                     n_questions: int = 6, sequencias: int = 2, comprimento: int = 8) -> GradCheckReport:
    """
    Gradcheck da perda completa da fase 1 num modelo pequeno em float64,
    sem dropout e com gradiente pela distância contextual. Cada tensor é
    verificado por inteiro ou numa amostra de ao menos AMOSTRA_MINIMA
    coordenadas.

    Raises:
        ConfigError: Se amostra < AMOSTRA_MINIMA
    """
    if amostra < AMOSTRA_MINIMA:
        raise ConfigError(f"amostra deve ser >= {AMOSTRA_MINIMA} coordenadas por tensor, recebido {amostra}")
    from perdas import LossConfig, perdas_modelo
    from QAKTModel import QAKTModel

    rng = np.random.default_rng(seed)
    modelo = QAKTModel(n_skills, n_questions, dim=dim, heads=heads, embedding_dropout=0.0,
                       prediction_dropout=0.0, distance_gradient=True, dtype=np.float64, seed=seed)
    modelo.eval()
    questoes = rng.integers(1, n_questions + 1, size=(sequencias, comprimento))
    respostas = rng.integers(0, 2, size=(sequencias, comprimento))
    mascara = np.ones((sequencias, comprimento), dtype=bool)
    config = LossConfig(beta=1.0, lam=1e-5, phase=1)

    def perda() -> Tensor:
        r_hat, codificado = modelo(questoes, respostas, mascara)
        return perdas_modelo(modelo, r_hat, codificado, respostas, config)[0]

    return grad_check(perda, modelo.parameters(), step=step, tolerance=tolerance, amostra=amostra, seed=seed)
