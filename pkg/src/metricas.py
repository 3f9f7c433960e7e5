"""
Métricas de avaliação.
"""

import numpy as np
from sklearn.metrics import accuracy_score, roc_auc_score

from excecoes import DataError, UndefinedMetricError


def auc(scores, labels) -> float:
    """
    Área sob a curva ROC das predições agrupadas (empates contam 0.5).

    Raises:
        DataError: Se scores e labels tiverem tamanhos diferentes
        UndefinedMetricError: Se houver uma só classe
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise DataError(f"scores ({scores.size}) e labels ({labels.size}) com tamanhos diferentes")
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC indefinida: {n_pos} positivos e {n_neg} negativos")
    return float(roc_auc_score(labels, scores))


def accuracy(scores, labels, limiar: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise UndefinedMetricError("Acurácia indefinida sem exemplos")
    return float(accuracy_score(labels == 1, scores >= limiar))


def mean_and_std(valores):
    valores = np.asarray(valores, dtype=np.float64)
    if valores.size == 0:
        return float("nan"), float("nan")
    return float(valores.mean()), float(valores.std())
