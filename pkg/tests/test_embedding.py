import numpy as np
import pytest

from excecoes import ConfigError, DataError
from ExerciseEmbedding import FROZEN_BINARY, TRAINABLE, ExerciseEmbedding
from Tensor import constante, sum_

D = 8


def _embedding(n_skills=4, n_questions=5, **kwargs):
    kwargs.setdefault("dropout_rate", 0.0)
    emb = ExerciseEmbedding(n_skills, n_questions, D, dtype=np.float64, rng=np.random.default_rng(0), **kwargs)
    emb.eval()
    return emb


class TestRelevance:

    def test_wp_zero_da_meio(self):
        emb = _embedding()
        emb.W_p.values = np.zeros((4, 5))
        np.testing.assert_array_equal(emb.relevance().values, np.full((4, 5), 0.5))

    def test_tabela_fixa_devolvida_como_esta(self, tabela_exemplo):
        emb = _embedding()
        emb.freeze_qmatrix(tabela_exemplo)
        assert emb.mode == FROZEN_BINARY
        np.testing.assert_array_equal(emb.relevance().values, tabela_exemplo)
        np.testing.assert_array_equal(emb.fixed_qmatrix, tabela_exemplo)

    def test_gradiente_so_no_modo_treinavel(self, tabela_exemplo):
        emb = _embedding()
        q = np.array([[1, 2, 3]])
        r = np.array([[1, 0, 1]])
        out = emb(q, r)
        sum_(out.X * constante(np.random.default_rng(1).normal(size=out.X.shape))).backward()
        assert emb.mode == TRAINABLE
        assert emb.W_p.grad is not None and np.abs(emb.W_p.grad).sum() > 0

        emb.W_p.zero_grad()
        emb.freeze_qmatrix(tabela_exemplo)
        out = emb(q, r)
        sum_(out.X * constante(np.random.default_rng(1).normal(size=out.X.shape))).backward()
        assert emb.W_p.grad is None
        assert emb.frozen_parameters() == {"W_p"}

    def test_forma_errada_ao_fixar(self):
        with pytest.raises(ConfigError):
            _embedding().freeze_qmatrix(np.ones((4, 6)))

    def test_valores_nao_binarios_ao_fixar(self):
        with pytest.raises(ConfigError):
            _embedding().freeze_qmatrix(np.full((4, 5), 0.5))


class TestSkillTags:

    def test_coluna_q3_da_tabela_de_exemplo(self, tabela_exemplo):
        emb = _embedding()
        emb.freeze_qmatrix(tabela_exemplo)
        c = emb.skill_tags(emb.full_table(), np.array([3]))
        np.testing.assert_array_equal(c.values[0], [0, 0, 1, 1])

    def test_indice_escolhe_uma_coluna(self):
        emb = _embedding()
        P = emb.relevance().values
        c = emb.skill_tags(emb.full_table(), np.array([2, 5]))
        np.testing.assert_allclose(c.values, P[:, [1, 4]].T)

    def test_q0_usa_tags_de_preenchimento(self):
        emb = _embedding()
        c = emb.skill_tags(emb.full_table(), np.array([0]))
        np.testing.assert_allclose(c.values[0], 1.0 / (1.0 + np.exp(-emb.w_pad.values)))

    def test_somente_binarios_no_modo_fixo(self, tabela_exemplo):
        emb = _embedding()
        emb.freeze_qmatrix(tabela_exemplo)
        c = emb.skill_tags(emb.full_table(), np.arange(1, 6))
        assert set(np.unique(c.values)) <= {0.0, 1.0}

    def test_coluna_zerada_da_vetor_zero(self):
        emb = _embedding(n_skills=2, n_questions=2)
        emb.freeze_qmatrix(np.array([[1, 0], [0, 0]]))
        c = emb.skill_tags(emb.full_table(), np.array([2]))
        np.testing.assert_array_equal(c.values[0], [0, 0])

    def test_indice_fora_do_intervalo(self):
        emb = _embedding()
        with pytest.raises(IndexError):
            emb.skill_tags(emb.full_table(), np.array([6]))


class TestSkillEncoding:

    def test_uma_habilidade(self):
        emb = _embedding()
        emb.E.values = np.abs(emb.E.values)
        k = emb.skill_encoding(constante([0.0, 0.0, 1.0, 0.0]))
        np.testing.assert_allclose(k.values, emb.E.values[:, 2])

    def test_vetor_zero(self):
        emb = _embedding()
        k = emb.skill_encoding(constante(np.zeros(4)))
        np.testing.assert_array_equal(k.values, np.zeros(D))

    def test_duas_habilidades_identicas(self):
        emb = _embedding()
        E = np.abs(emb.E.values)
        E[:, 1] = E[:, 0]
        emb.E.values = E
        k = emb.skill_encoding(constante([1.0, 1.0, 0.0, 0.0]))
        np.testing.assert_allclose(k.values, E[:, 0])

    def test_sem_media(self):
        emb = _embedding(no_avg=True)
        emb.E.values = np.abs(emb.E.values)
        k = emb.skill_encoding(constante([1.0, 1.0, 0.0, 0.0]))
        np.testing.assert_allclose(k.values, emb.E.values[:, 0] + emb.E.values[:, 1])

    def test_sem_ativacao_mantem_negativos(self):
        emb = _embedding(no_act=True)
        emb.E.values = -np.abs(emb.E.values)
        k = emb.skill_encoding(constante([1.0, 0.0, 0.0, 0.0]))
        np.testing.assert_allclose(k.values, emb.E.values[:, 0])


class TestEncodeQuestion:

    def test_mesmas_tags_mesmo_mu_iguais(self):
        emb = _embedding(n_skills=2, n_questions=3, no_ln=True)
        emb.freeze_qmatrix(np.array([[1, 1, 0], [0, 0, 1]]))
        x = emb.encode_question(np.array([1, 2])).values
        np.testing.assert_allclose(x[0], x[1])

        emb.u.values = np.array([0.0, 0.0, 0.5, 0.0])
        x = emb.encode_question(np.array([1, 2])).values
        assert not np.allclose(x[0], x[1])

    def test_layer_norm_absorve_deslocamento_escalar(self):
        """A centralização da LayerNorm remove o mesmo μ somado a todas as features."""
        emb = _embedding(n_skills=2, n_questions=3)
        emb.freeze_qmatrix(np.array([[1, 1, 0], [0, 0, 1]]))
        emb.u.values = np.array([0.0, 0.0, 0.5, 0.0])
        x = emb.encode_question(np.array([1, 2])).values
        np.testing.assert_allclose(x[0], x[1], atol=1e-6)

    def test_media_zero_apos_normalizacao(self):
        x = _embedding().encode_question(np.array([[1, 2, 3, 4, 5]])).values
        np.testing.assert_allclose(x.mean(axis=-1), 0.0, atol=1e-6)

    def test_sem_layer_norm(self):
        emb = _embedding(no_ln=True)
        emb.u.values = np.linspace(-0.5, 0.5, 6)
        x = emb.encode_question(np.array([3])).values[0]
        c = emb.skill_tags(emb.full_table(), np.array([3]))
        k = emb.skill_encoding(c).values[0]
        np.testing.assert_allclose(x, k + emb.u.values[3])


class TestEncodeResponse:

    def _partes(self, emb, q):
        tabela = emb.full_table()
        k_q = emb.skill_encoding(emb.skill_tags(tabela, np.array([q]))).values[0]
        k_0 = emb.skill_encoding(emb.skill_tags(tabela, np.array([0]))).values[0]
        return k_q, k_0

    def test_acerto_metade_positiva(self):
        emb = _embedding(no_ln=True)
        emb.u.values = np.full(6, 0.3)
        k_q, k_0 = self._partes(emb, 2)
        y = emb.encode_response(np.array([2]), np.array([1])).values[0]
        np.testing.assert_allclose(y[:D], k_q + 0.3)
        np.testing.assert_allclose(y[D:], k_0 + 0.3)

    def test_metades_trocam_com_a_resposta(self):
        emb = _embedding(no_ln=True)
        acerto = emb.encode_response(np.array([4]), np.array([1])).values[0]
        erro = emb.encode_response(np.array([4]), np.array([0])).values[0]
        np.testing.assert_allclose(acerto[:D], erro[D:])
        np.testing.assert_allclose(acerto[D:], erro[:D])

    def test_mu_so_na_metade_ativa(self):
        emb = _embedding(no_ln=True, mu_both_halves=False)
        emb.u.values = np.full(6, 0.3)
        k_q, k_0 = self._partes(emb, 2)
        y = emb.encode_response(np.array([2]), np.array([1])).values[0]
        np.testing.assert_allclose(y[:D], k_q + 0.3)
        np.testing.assert_allclose(y[D:], k_0)

    def test_media_zero_conjunta(self):
        y = _embedding().encode_response(np.array([[1, 2, 3]]), np.array([[1, 0, 1]])).values
        np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-6)

    def test_media_zero_por_metade(self):
        y = _embedding(response_layer_norm="per-half").encode_response(
            np.array([[1, 2, 3]]), np.array([[1, 0, 1]])).values
        np.testing.assert_allclose(y[..., :D].mean(axis=-1), 0.0, atol=1e-6)
        np.testing.assert_allclose(y[..., D:].mean(axis=-1), 0.0, atol=1e-6)

    def test_resposta_invalida(self):
        with pytest.raises(DataError):
            _embedding().encode_response(np.array([1]), np.array([2]))

    def test_formas_diferentes(self):
        with pytest.raises(DataError):
            _embedding().encode_response(np.array([1, 2]), np.array([1]))


class TestEncodeBatch:

    def test_comprimento_um(self):
        out = _embedding().encode_batch(np.array([[3], [1]]), np.array([[1], [0]]))
        assert out.X.shape == (2, 1, D)
        assert out.Y.shape == (2, 1, 2 * D)
        assert out.skill_tags.shape == (2, 1, 4)

    def test_avaliacao_deterministica(self):
        emb = _embedding(dropout_rate=0.5)
        q, r = np.array([[1, 2, 3]]), np.array([[0, 1, 1]])
        a = emb(q, r, rng=np.random.default_rng(0)).Y.values
        b = emb(q, r, rng=np.random.default_rng(1)).Y.values
        np.testing.assert_array_equal(a, b)

    def test_dropout_no_treino(self):
        emb = _embedding(dropout_rate=0.5)
        emb.train()
        q, r = np.array([[1, 2, 3]]), np.array([[0, 1, 1]])
        a = emb(q, r, rng=np.random.default_rng(0)).X.values
        b = emb(q, r, rng=np.random.default_rng(1)).X.values
        assert not np.array_equal(a, b)

    def test_preenchimento_mascarado(self):
        out = _embedding()(np.array([[2, 4, 0, 0]]), np.array([[1, 0, 0, 0]]))
        np.testing.assert_array_equal(out.mask, [[True, True, False, False]])
        assert np.all(np.isfinite(out.X.values))

    def test_exportacao_em_float64(self):
        assert _embedding().export_relevance().dtype == np.float64
