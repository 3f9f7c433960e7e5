"""Fixtures compartilhadas: q-matrix de exemplo, logs pequenos e configurações mínimas."""

import os

import numpy as np
import pytest

from configuracao import RunConfig, SyntheticSpec
from QMatrix import QMatrix
from sintetico import generate_synthetic

# Linhas c1..c4, colunas q1..q5
TABELA_EXEMPLO = np.array([
    [1, 0, 0, 0, 1],
    [1, 1, 0, 1, 0],
    [1, 1, 1, 0, 0],
    [1, 1, 1, 0, 1],
], dtype=np.int8)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("QAKT_RUN_SLOW") == "1":
        return
    pular = pytest.mark.skip(reason="defina QAKT_RUN_SLOW=1 para rodar")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(pular)


@pytest.fixture
def tabela_exemplo():
    return TABELA_EXEMPLO.copy()


@pytest.fixture
def qmatrix_exemplo():
    return QMatrix(TABELA_EXEMPLO.copy(), question_ids=[f"q{j}" for j in range(1, 6)],
                   skill_labels=[f"c{i}" for i in range(1, 5)])


@pytest.fixture
def csv_interacoes(tmp_path):
    """Escreve um CSV de interações e devolve o caminho."""
    def _escrever(linhas, nome="interacoes.csv",
                  cabecalho="student_id,question_id,correct,timestamp"):
        caminho = tmp_path / nome
        caminho.write_text(cabecalho + "\n" + "\n".join(linhas) + "\n", encoding="utf-8")
        return str(caminho)
    return _escrever


@pytest.fixture
def spec_pequeno():
    return SyntheticSpec(n_skills=3, n_questions=8, students=12, interactions=20,
                         slip=0.1, guess=0.1, p_master=0.5, q_density=0.4, seed=0)


@pytest.fixture
def log_pequeno(spec_pequeno):
    log, _ = generate_synthetic(spec_pequeno)
    return log


@pytest.fixture
def cfg_minima(tmp_path):
    """Modelo minúsculo e poucas épocas: suficiente para exercitar o pipeline."""
    return RunConfig(n_skills=3, dim=8, heads=2, slice_length=10, batch_size=4, max_epochs=2,
                     lr=1e-3, patience=2, folds=3, seed=0, embedding_dropout=0.0,
                     prediction_dropout=0.0, output_root=str(tmp_path / "run"), name="teste").validate()
