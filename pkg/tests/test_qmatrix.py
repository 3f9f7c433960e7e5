import numpy as np
import pytest

from dados import read_qmatrix
from excecoes import DataError
from QMatrix import QMatrix


class TestQMatrix:

    def test_dimensoes(self, qmatrix_exemplo):
        assert qmatrix_exemplo.getSkillCount() == 4
        assert qmatrix_exemplo.getQuestionCount() == 5
        assert qmatrix_exemplo.shape == (4, 5)

    def test_habilidades_de_q2(self, qmatrix_exemplo):
        # q2 exige c2, c3 e c4, não c1
        assert qmatrix_exemplo.getQuestionSkills(1) == [1, 2, 3]
        assert not qmatrix_exemplo.hasSkill(0, 1)

    def test_questoes_da_habilidade(self, qmatrix_exemplo):
        assert qmatrix_exemplo.getSkillQuestions(0) == [0, 4]

    def test_densidade(self, qmatrix_exemplo):
        assert qmatrix_exemplo.getDensity() == pytest.approx(12 / 20)

    def test_adicionar_e_remover(self, qmatrix_exemplo):
        qmatrix_exemplo.addSkill(0, 2)
        assert qmatrix_exemplo.hasSkill(0, 2)
        qmatrix_exemplo.removeSkill(0, 2)
        assert not qmatrix_exemplo.hasSkill(0, 2)

    def test_colunas_vazias(self):
        assert QMatrix([[1, 0, 0], [1, 0, 1]]).emptyColumns() == [1]

    def test_indices_invalidos(self, qmatrix_exemplo):
        with pytest.raises(IndexError):
            qmatrix_exemplo.hasSkill(4, 0)
        with pytest.raises(IndexError):
            qmatrix_exemplo.getQuestionSkills(5)

    def test_valores_nao_binarios(self):
        with pytest.raises(DataError):
            QMatrix([[0.5, 1.0]])

    def test_matriz_vazia(self):
        with pytest.raises(DataError):
            QMatrix(np.zeros((0, 3)))

    def test_ids_com_tamanho_errado(self):
        with pytest.raises(DataError):
            QMatrix([[1, 0]], question_ids=["a"])

    def test_copia_independente(self, qmatrix_exemplo):
        copia = qmatrix_exemplo.copy()
        copia.removeSkill(0, 0)
        assert qmatrix_exemplo.hasSkill(0, 0)
        assert copia != qmatrix_exemplo

    def test_str(self, qmatrix_exemplo):
        texto = str(qmatrix_exemplo)
        assert texto.startswith("Q-matrix:")
        assert "c4" in texto and "q5" in texto

    def test_exportar_csv(self, qmatrix_exemplo, tmp_path):
        caminho = str(tmp_path / "q.csv")
        qmatrix_exemplo.exportar_csv(caminho, header="# teste")
        assert read_qmatrix(caminho) == qmatrix_exemplo
