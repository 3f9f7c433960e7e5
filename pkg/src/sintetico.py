"""
Gerador de dados sintéticos no modelo DINA a partir de uma q-matrix conhecida.
"""

import logging
from typing import Tuple

import numpy as np
import pandas as pd

from configuracao import SyntheticSpec
from dados import InteractionLog
from QMatrix import QMatrix

logger = logging.getLogger(__name__)


def _qmatrix_verdadeira(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(q_density) por entrada; questões vazias recebem uma habilidade sorteada."""
    Q = (rng.random((spec.n_skills, spec.n_questions)) < spec.q_density).astype(np.int8)
    for q in np.flatnonzero(Q.sum(axis=0) == 0):
        Q[rng.integers(spec.n_skills), q] = 1
    return Q


def generate_synthetic(spec: SyntheticSpec) -> Tuple[InteractionLog, QMatrix]:
    """
    Gera interações DINA e a q-matrix verdadeira.

    Cada aluno sorteia um vetor de domínio (Bernoulli p_master por habilidade);
    a cada interação uma questão é escolhida uniformemente, ξ = 1 se todas as
    habilidades exigidas são dominadas, e a resposta é Bernoulli de
    ξ(1 - s) + (1 - ξ)g. Com learn_rate > 0, após cada interação uma
    habilidade exigida ainda não dominada passa a ser dominada com essa
    probabilidade.

    Returns:
        (InteractionLog, QMatrix N×M com ao menos uma habilidade por questão)

    Raises:
        ConfigError: Se o spec violar suas restrições
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    Q = _qmatrix_verdadeira(spec, rng)
    exigidas = [np.flatnonzero(Q[:, q]) for q in range(spec.n_questions)]

    alunos, questoes, respostas, tempos = [], [], [], []
    for s in range(spec.students):
        dominio = rng.random(spec.n_skills) < spec.p_master
        servidas = rng.integers(spec.n_questions, size=spec.interactions)
        for t, q in enumerate(servidas):
            xi = bool(dominio[exigidas[q]].all())
            p = (1.0 - spec.slip) if xi else spec.guess
            alunos.append(f"s{s}")
            questoes.append(f"q{q + 1}")
            respostas.append(int(rng.random() < p))
            tempos.append(t)
            if spec.learn_rate > 0:
                faltando = exigidas[q][~dominio[exigidas[q]]]
                if faltando.size and rng.random() < spec.learn_rate:
                    dominio[rng.choice(faltando)] = True

    # Vocabulário na ordem natural q1..qM, independente da ordem de sorteio
    question_ids = [f"q{j + 1}" for j in range(spec.n_questions)]
    question_index = {qid: j + 1 for j, qid in enumerate(question_ids)}
    frame = pd.DataFrame({
        "student_id": alunos,
        "question_id": questoes,
        "correct": np.asarray(respostas, dtype=np.int64),
        "timestamp": np.asarray(tempos, dtype=np.int64),
    })
    frame["question_index"] = frame["question_id"].map(question_index).astype(np.int64)

    logger.info("Sintético: %d alunos × %d interações, acurácia %.3f, densidade da q-matrix %.3f",
                spec.students, spec.interactions, frame["correct"].mean(), Q.mean())
    return InteractionLog(frame, question_index), QMatrix(Q, question_ids=question_ids)
