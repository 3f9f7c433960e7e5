import itertools

import numpy as np
import pandas as pd
import pytest

from avaliacao_qmatrix import (align_to_vocabulary, agreement_matrix, expert_qmatrix_from_tags,
                               inject, match_and_score)
from dados import InteractionLog
from excecoes import DataError
from QAKTModel import QAKTModel
from QMatrix import QMatrix


def _f1_forca_bruta(aprendida, verdadeira):
    """Maior acordo entre todas as permutações de linhas e o F1 correspondente."""
    melhor = None
    for perm in itertools.permutations(range(aprendida.shape[0])):
        alinhada = np.zeros_like(aprendida)
        alinhada[list(perm)] = aprendida
        acordo = int(np.sum(alinhada == verdadeira))
        if melhor is None or acordo > melhor[0]:
            vp = int(np.sum((alinhada == 1) & (verdadeira == 1)))
            melhor = (acordo, 2 * vp / (aprendida.sum() + verdadeira.sum()))
    return melhor


class TestMatchAndScore:

    def test_permutacao_de_linhas_da_f1_um(self, tabela_exemplo):
        permutada = tabela_exemplo[[2, 0, 3, 1]]
        relatorio = match_and_score(permutada, tabela_exemplo)
        assert relatorio.f1 == 1.0
        assert relatorio.exact_match_rate == 1.0
        assert relatorio.permutation == [2, 0, 3, 1]
        assert relatorio.method == "exact"

    def test_complemento_com_uma_habilidade(self):
        verdadeira = np.array([[1, 0, 1, 0]])
        relatorio = match_and_score(1 - verdadeira, verdadeira)
        assert relatorio.f1 == 0.0
        assert relatorio.precision == 0.0 and relatorio.recall == 0.0

    def test_igual_a_forca_bruta(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            aprendida = rng.integers(0, 2, size=(4, 20))
            verdadeira = rng.integers(0, 2, size=(4, 20))
            relatorio = match_and_score(aprendida, verdadeira, seed=None)
            acordo, f1 = _f1_forca_bruta(aprendida, verdadeira)
            assert relatorio.agreement == acordo
            assert relatorio.f1 == pytest.approx(f1)
            assert relatorio.baseline_f1 is None

    def test_numeros_de_habilidades_diferentes(self, tabela_exemplo):
        relatorio = match_and_score(tabela_exemplo[:2], tabela_exemplo)
        assert (relatorio.n_learned, relatorio.n_true) == (2, 4)
        assert relatorio.precision == 1.0
        assert relatorio.recall == pytest.approx(tabela_exemplo[:2].sum() / tabela_exemplo.sum())
        assert any("linhas de zeros" in n for n in relatorio.notes)

    def test_atribuicao_exata_com_muitas_habilidades(self):
        rng = np.random.default_rng(2)
        n = 20
        verdadeira = rng.integers(0, 2, size=(n, 60))
        perm = rng.permutation(n)
        relatorio = match_and_score(verdadeira[perm], verdadeira)
        assert relatorio.method == "exact"
        assert relatorio.f1 == 1.0
        assert relatorio.permutation == [int(p) for p in perm]
        assert relatorio.notes == []

    def test_baseline_aleatorio(self, tabela_exemplo):
        a = match_and_score(tabela_exemplo, tabela_exemplo, seed=3)
        b = match_and_score(tabela_exemplo, tabela_exemplo, seed=3)
        assert a.baseline_f1 == b.baseline_f1
        assert 0.0 <= a.baseline_f1 <= 1.0

    def test_colunas_alinhadas_pelos_ids(self, qmatrix_exemplo):
        ordem = [4, 2, 0, 1, 3]
        embaralhada = QMatrix(qmatrix_exemplo.entries[:, ordem],
                              question_ids=[qmatrix_exemplo.question_ids[j] for j in ordem])
        assert match_and_score(qmatrix_exemplo, embaralhada).f1 == 1.0

    def test_questoes_diferentes(self, tabela_exemplo):
        with pytest.raises(DataError):
            match_and_score(tabela_exemplo, tabela_exemplo[:, :3])

    def test_acordo(self):
        A = agreement_matrix(np.array([[1, 0, 1]]), np.array([[1, 1, 1], [0, 1, 0]]))
        np.testing.assert_array_equal(A, [[2, 0]])

    def test_texto_do_relatorio(self, tabela_exemplo):
        texto = match_and_score(tabela_exemplo, tabela_exemplo).texto("# qakt")
        assert texto.startswith("# qakt\nmethod: exact\n")
        assert "f1: 1.000000" in texto


class TestInjecao:

    def test_inject_congela_e_reinicializa(self, cfg_minima, tabela_exemplo):
        modelo = QAKTModel.from_config(cfg_minima.with_overrides(n_skills=4), n_questions=5)
        antes = modelo.embedding.E.values.copy()
        inject(QMatrix(tabela_exemplo), modelo, np.random.default_rng(9))
        assert modelo.qmatrix_frozen
        np.testing.assert_array_equal(modelo.relevance(), tabela_exemplo)
        assert not np.array_equal(modelo.embedding.E.values, antes)


class TestTagsDeEspecialista:

    def _log(self, skills):
        frame = pd.DataFrame({
            "student_id": ["a", "a", "b"],
            "question_id": ["x", "y", "x"],
            "correct": [1, 0, 1],
            "question_index": [1, 2, 1],
            "skills": pd.Series(skills, dtype=object),
        })
        return InteractionLog(frame, {"x": 1, "y": 2}, {"s1": 0, "s2": 1})

    def test_multi_hot(self):
        Q = expert_qmatrix_from_tags(self._log([["s1"], ["s1", "s2"], ["s2"]]))
        np.testing.assert_array_equal(Q.entries, [[1, 1], [1, 1]])
        assert Q.skill_labels == ["s1", "s2"]
        assert Q.question_ids == ["x", "y"]

    def test_questao_sem_tag(self):
        Q = expert_qmatrix_from_tags(self._log([["s1"], [], ["s1"]]))
        assert Q.emptyColumns() == [1]

    def test_sem_tags(self, log_pequeno):
        with pytest.raises(DataError):
            expert_qmatrix_from_tags(log_pequeno)


class TestVocabulario:

    def test_reordena_colunas(self, qmatrix_exemplo):
        ids = ["q5", "q1", "q2", "q3", "q4"]
        alinhada = align_to_vocabulary(qmatrix_exemplo, ids)
        assert alinhada.question_ids == ids
        np.testing.assert_array_equal(alinhada.entries[:, 0], qmatrix_exemplo.entries[:, 4])

    def test_mesma_ordem_devolve_a_propria(self, qmatrix_exemplo):
        assert align_to_vocabulary(qmatrix_exemplo, qmatrix_exemplo.question_ids) is qmatrix_exemplo

    def test_ids_diferentes(self, qmatrix_exemplo):
        with pytest.raises(DataError):
            align_to_vocabulary(qmatrix_exemplo, ["q1", "q2", "q3", "q4", "q9"])


def test_injetar_exportar_injetar(cfg_minima, tabela_exemplo):
    modelo = QAKTModel.from_config(cfg_minima.with_overrides(n_skills=4), n_questions=5)
    inject(tabela_exemplo, modelo)
    exportada = modelo.relevance().astype(np.int8)
    inject(exportada, modelo)
    np.testing.assert_array_equal(modelo.relevance(), tabela_exemplo)


def test_tags_idempotentes_com_log_duplicado():
    frame = pd.DataFrame({
        "student_id": ["a", "b"], "question_id": ["x", "y"], "correct": [1, 0],
        "question_index": [1, 2], "skills": pd.Series([["s1"], ["s2"]], dtype=object),
    })
    log = InteractionLog(frame, {"x": 1, "y": 2}, {"s1": 0, "s2": 1})
    duplicado = InteractionLog(pd.concat([frame, frame], ignore_index=True), {"x": 1, "y": 2}, {"s1": 0, "s2": 1})
    assert expert_qmatrix_from_tags(log) == expert_qmatrix_from_tags(duplicado)
