import numpy as np
import pytest

from configuracao import RunConfig
from excecoes import ConfigError
from QAKTModel import QAKTModel
from perdas import (LossConfig, loss_difficulty, loss_prediction, loss_sparse, perdas_modelo,
                    total_loss)
from Tensor import constante, parametro


class TestLossPrediction:

    def test_meio_da_ln2(self):
        soma, media = loss_prediction(constante([0.5]), [1])
        assert soma.item() == pytest.approx(np.log(2))
        assert media == pytest.approx(np.log(2))

    def test_predicao_perfeita_quase_zero(self):
        soma, _ = loss_prediction(constante([1.0, 0.0]), [1, 0])
        assert soma.item() == pytest.approx(0.0, abs=1e-5)

    def test_tudo_mascarado(self):
        soma, media = loss_prediction(constante([[0.3, 0.8]]), [[1, 0]], mask=[[False, False]])
        assert soma.item() == 0.0
        assert media == 0.0

    def test_rotulo_de_preenchimento_nao_importa(self):
        r_hat = constante([[0.7, 0.2, 0.4]])
        mask = [[True, True, False]]
        a, _ = loss_prediction(r_hat, [[1, 0, 0]], mask)
        b, _ = loss_prediction(r_hat, [[1, 0, 1]], mask)
        assert a.item() == pytest.approx(b.item())

    def test_media_por_posicao_real(self):
        soma, media = loss_prediction(constante([[0.5, 0.5, 0.9]]), [[1, 0, 1]], [[True, True, False]])
        assert media == pytest.approx(soma.item() / 2)

    def test_sem_log_de_zero(self):
        soma, _ = loss_prediction(constante([0.0]), [1])
        assert np.isfinite(soma.item())


class TestLossSparse:

    def test_valor_no_meio(self):
        assert loss_sparse(constante([0.0, 0.5, 1.0])).item() == pytest.approx(0.5)

    def test_tags_binarias_zeram(self):
        assert loss_sparse(constante([[1.0, 0.0], [0.0, 1.0]])).item() == 0.0

    def test_um_quarto_por_elemento(self):
        assert loss_sparse(constante(np.full((2, 3), 0.25))).item() == pytest.approx(6 * 0.25)

    def test_mascara_por_posicao(self):
        tags = constante(np.full((1, 2, 3), 0.5))
        assert loss_sparse(tags, mask=[[True, False]]).item() == pytest.approx(1.5)


class TestLossDifficulty:

    def test_valor(self):
        assert loss_difficulty(constante([0.1, -0.2])).item() == pytest.approx(0.05)

    def test_gradiente(self):
        u = parametro([0.1, -0.2, 0.0], name="u", dtype=np.float64)
        loss_difficulty(u).backward()
        np.testing.assert_allclose(u.grad, [0.2, -0.4, 0.0])


class TestTotalLoss:

    def test_soma_ponderada(self):
        total = total_loss(constante(1.0), constante(2.0), constante(3.0), LossConfig(beta=0.5, lam=0.1))
        assert total.item() == pytest.approx(1.0 + 0.5 * 2.0 + 0.1 * 3.0)

    def test_peso_zero_fica_fora_do_grafo(self):
        L_s = parametro(2.0, name="L_s", dtype=np.float64)
        L_p = parametro(1.0, name="L_p", dtype=np.float64)
        total_loss(L_p, L_s, constante(0.0), LossConfig(beta=0.0, lam=0.0)).backward()
        assert L_s.grad is None
        assert L_p.grad == pytest.approx(1.0)

    def test_por_fase(self):
        cfg = RunConfig(beta=1.0, beta_phase2=0.0, lam=1e-5)
        assert LossConfig.for_phase(cfg, 1).beta == 1.0
        fase2 = LossConfig.for_phase(cfg, 2)
        assert fase2.beta == 0.0 and fase2.phase == 2 and fase2.lam == 1e-5

    def test_fase_invalida(self):
        with pytest.raises(ConfigError):
            LossConfig(phase=3)
        with pytest.raises(ConfigError):
            LossConfig(beta=-1.0)


def _gradiente_wp(usar_total):
    modelo = QAKTModel(2, 4, dim=8, heads=2, embedding_dropout=0.0, prediction_dropout=0.0,
                       dtype=np.float64, seed=1)
    modelo.eval()
    q, r = np.array([[1, 2, 3, 4]]), np.array([[1, 0, 0, 1]])
    r_hat, codificado = modelo(q, r)
    total, L_p, _, _, _ = perdas_modelo(modelo, r_hat, codificado, r, LossConfig(beta=0.0, lam=0.0))
    (total if usar_total else L_p).backward()
    return modelo.embedding.W_p.grad


def test_pesos_nulos_dao_gradiente_de_l_p():
    np.testing.assert_array_equal(_gradiente_wp(True), _gradiente_wp(False))
