"""
Comparação de q-matrices (aprendida, injetada, verdadeira) e injeção de
q-matrices externas no modelo.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from dados import InteractionLog
from excecoes import DataError
from QMatrix import QMatrix

logger = logging.getLogger(__name__)

Matriz = Union[QMatrix, np.ndarray]


@dataclass
class RecoveryReport:
    """
    permutation[i] = linha da q-matrix verdadeira atribuída à linha i da aprendida
    (após preencher a menor com linhas de zeros).
    """
    permutation: List[int]
    precision: float
    recall: float
    f1: float
    exact_match_rate: float
    baseline_f1: Optional[float]
    method: str
    n_learned: int
    n_true: int
    n_questions: int
    agreement: int = 0
    notes: List[str] = field(default_factory=list)

    def texto(self, header: Optional[str] = None) -> str:
        linhas = [header] if header else []
        linhas += [
            f"method: {self.method}",
            f"n_learned: {self.n_learned}",
            f"n_true: {self.n_true}",
            f"n_questions: {self.n_questions}",
            f"permutation: {' '.join(str(p) for p in self.permutation)}",
            f"agreement: {self.agreement}",
            f"precision: {self.precision:.6f}",
            f"recall: {self.recall:.6f}",
            f"f1: {self.f1:.6f}",
            f"exact_match_rate: {self.exact_match_rate:.6f}",
        ]
        if self.baseline_f1 is not None:
            linhas.append(f"baseline_f1: {self.baseline_f1:.6f}")
        linhas += [f"note: {n}" for n in self.notes]
        return "\n".join(linhas) + "\n"

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "method": self.method, "n_learned": self.n_learned, "n_true": self.n_true,
            "n_questions": self.n_questions, "agreement": self.agreement,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "exact_match_rate": self.exact_match_rate,
            "baseline_f1": np.nan if self.baseline_f1 is None else self.baseline_f1,
        }])


def _como_matriz(q: Matriz) -> np.ndarray:
    m = q.entries if isinstance(q, QMatrix) else np.asarray(q)
    if m.ndim != 2:
        raise DataError(f"Q-matrix deve ser 2D, recebido forma {m.shape}")
    return m.astype(np.int64)


def _alinhar_colunas(aprendida: Matriz, verdadeira: Matriz) -> np.ndarray:
    """Reordena as colunas da verdadeira pelos ids da aprendida quando ambos têm ids."""
    v = _como_matriz(verdadeira)
    if isinstance(aprendida, QMatrix) and isinstance(verdadeira, QMatrix):
        ids_a, ids_v = aprendida.question_ids, verdadeira.question_ids
        if ids_a != ids_v and sorted(ids_a) == sorted(ids_v):
            posicao = {q: j for j, q in enumerate(ids_v)}
            v = v[:, [posicao[q] for q in ids_a]]
    return v


def _preencher(m: np.ndarray, n: int) -> np.ndarray:
    if m.shape[0] == n:
        return m
    return np.vstack([m, np.zeros((n - m.shape[0], m.shape[1]), dtype=m.dtype)])


def agreement_matrix(learned: np.ndarray, true: np.ndarray) -> np.ndarray:
    """A[i, j] = número de entradas iguais entre a linha i aprendida e a linha j verdadeira."""
    return learned @ true.T + (1 - learned) @ (1 - true).T


def _atribuicao_otima(A: np.ndarray) -> List[int]:
    """perm[i] = linha verdadeira atribuída à linha aprendida i, com acordo total máximo."""
    linhas, colunas = linear_sum_assignment(A, maximize=True)
    perm = [0] * A.shape[0]
    for i, j in zip(linhas, colunas):
        perm[int(i)] = int(j)
    return perm


def _pontuar(aprendida: np.ndarray, verdadeira: np.ndarray, perm: List[int]) -> Tuple[float, float, float, float]:
    alinhada = np.zeros_like(aprendida)
    alinhada[perm] = aprendida
    vp = int(np.sum((alinhada == 1) & (verdadeira == 1)))
    n_aprendida = int(aprendida.sum())
    n_verdadeira = int(verdadeira.sum())
    precisao = vp / n_aprendida if n_aprendida else 0.0
    revocacao = vp / n_verdadeira if n_verdadeira else 0.0
    f1 = 2 * vp / (n_aprendida + n_verdadeira) if (n_aprendida + n_verdadeira) else 0.0
    exatas = float(np.mean(np.all(alinhada == verdadeira, axis=0)))
    return precisao, revocacao, f1, exatas


def match_and_score(Q_learned: Matriz, Q_true: Matriz, seed: Optional[int] = 0) -> RecoveryReport:
    """
    Atribuição ótima um-para-um das habilidades (maior acordo total entre
    entradas) e precisão/revocação/F1 por entrada sob essa atribuição.

    A menor q-matrix é completada com linhas de zeros. Com `seed`, inclui o F1
    de uma matriz aleatória com a mesma densidade e forma da aprendida.

    Raises:
        DataError: Se o número de questões M for diferente
    """
    aprendida = _como_matriz(Q_learned)
    verdadeira = _alinhar_colunas(Q_learned, Q_true)
    if aprendida.shape[1] != verdadeira.shape[1]:
        raise DataError(f"Q-matrices com números de questões diferentes: "
                        f"{aprendida.shape[1]} e {verdadeira.shape[1]}")

    n = max(aprendida.shape[0], verdadeira.shape[0])
    A_pad = _preencher(aprendida, n)
    V_pad = _preencher(verdadeira, n)
    acordo = agreement_matrix(A_pad, V_pad)

    notas = []
    perm = _atribuicao_otima(acordo)
    if aprendida.shape[0] != verdadeira.shape[0]:
        notas.append(f"habilidades diferentes ({aprendida.shape[0]} vs {verdadeira.shape[0]}): "
                     f"linhas de zeros adicionadas")

    precisao, revocacao, f1, exatas = _pontuar(A_pad, V_pad, perm)

    baseline = None
    if seed is not None:
        rng = np.random.default_rng(seed)
        aleatoria = (rng.random(aprendida.shape) < aprendida.mean()).astype(np.int64)
        baseline = match_and_score(aleatoria, verdadeira, seed=None).f1

    return RecoveryReport(
        permutation=[int(p) for p in perm], precision=precisao, recall=revocacao, f1=f1,
        exact_match_rate=exatas, baseline_f1=baseline, method="exact",
        n_learned=aprendida.shape[0], n_true=verdadeira.shape[0], n_questions=aprendida.shape[1],
        agreement=int(sum(acordo[i, j] for i, j in enumerate(perm))), notes=notas,
    )


def inject(qmatrix: Matriz, model, rng: Optional[np.random.Generator] = None):
    """
    Fixa a q-matrix no modelo (modo frozen-binary) e reinicializa todos os
    outros parâmetros.

    Raises:
        ConfigError: Se a forma não for N×M do modelo
    """
    model.inject(qmatrix)
    model.reset_parameters(rng if rng is not None else np.random.default_rng(0))
    return model


def expert_qmatrix_from_tags(log: InteractionLog) -> QMatrix:
    """
    Q-matrix multi-hot das tags de especialista: (c, q) = 1 se a habilidade c
    aparece em alguma interação com a questão q.

    Raises:
        DataError: Se nenhuma interação tiver tags
    """
    if not log.has_skills or not log.skill_index:
        raise DataError("Nenhuma interação com tags de habilidade")

    Q = np.zeros((len(log.skill_index), log.n_questions), dtype=np.int8)
    for q, tags in zip(log.frame["question_index"], log.frame["skills"]):
        for s in tags:
            Q[log.skill_index[s], q - 1] = 1

    vazias = np.flatnonzero(Q.sum(axis=0) == 0)
    if vazias.size:
        ids = log.question_ids
        logger.warning("%d questões sem tag de habilidade: %s", vazias.size,
                       ", ".join(ids[j] for j in vazias[:10]))
    rotulos = sorted(log.skill_index, key=log.skill_index.get)
    return QMatrix(Q, question_ids=log.question_ids, skill_labels=rotulos)


def align_to_vocabulary(qmatrix: QMatrix, question_ids: List[str]) -> QMatrix:
    """
    Reordena as colunas para o vocabulário de questões do log.

    Raises:
        DataError: Se os conjuntos de ids forem diferentes
    """
    if qmatrix.question_ids == list(question_ids):
        return qmatrix
    faltando = sorted(set(question_ids) - set(qmatrix.question_ids))
    sobrando = sorted(set(qmatrix.question_ids) - set(question_ids))
    if faltando or sobrando:
        raise DataError(f"Q-matrix e dados com questões diferentes "
                        f"(ausentes na q-matrix: {faltando[:5]}, extras: {sobrando[:5]})")
    posicao = {q: j for j, q in enumerate(qmatrix.question_ids)}
    entries = qmatrix.entries[:, [posicao[q] for q in question_ids]]
    return QMatrix(entries, question_ids=list(question_ids), skill_labels=qmatrix.skill_labels)
