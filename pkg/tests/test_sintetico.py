import numpy as np
import pytest

from configuracao import SyntheticSpec
from excecoes import ConfigError
from sintetico import generate_synthetic


def _spec(**valores):
    base = dict(n_skills=3, n_questions=10, students=20, interactions=30, slip=0.1, guess=0.1,
                p_master=0.5, q_density=0.3, seed=0)
    base.update(valores)
    return SyntheticSpec(**base)


class TestGenerateSynthetic:

    def test_sem_ruido_dominando_tudo_acerta_tudo(self):
        log, _ = generate_synthetic(_spec(slip=0.0, guess=0.0, p_master=1.0))
        assert log.frame["correct"].eq(1).all()

    def test_sem_ruido_sem_dominio_erra_tudo(self):
        log, _ = generate_synthetic(_spec(slip=0.0, guess=0.0, p_master=0.0))
        assert log.frame["correct"].eq(0).all()

    def test_acuracia_com_slip(self):
        log, _ = generate_synthetic(_spec(p_master=1.0, slip=0.1, students=1000, interactions=100))
        assert len(log) == 100_000
        assert log.frame["correct"].mean() == pytest.approx(0.9, abs=0.01)

    def test_toda_questao_tem_habilidade(self):
        _, Q = generate_synthetic(_spec(q_density=0.05, n_questions=40))
        assert Q.emptyColumns() == []

    def test_vocabulario_em_ordem_natural(self):
        log, Q = generate_synthetic(_spec())
        assert log.question_ids == [f"q{j}" for j in range(1, 11)]
        assert Q.question_ids == log.question_ids
        assert log.frame["question_index"].between(1, 10).all()

    def test_deterministico(self):
        a_log, a_Q = generate_synthetic(_spec(seed=5))
        b_log, b_Q = generate_synthetic(_spec(seed=5))
        assert a_log.frame.equals(b_log.frame)
        assert a_Q == b_Q

    def test_aprendizado_aumenta_acertos(self):
        sem, _ = generate_synthetic(_spec(slip=0.0, guess=0.0, p_master=0.0, learn_rate=0.0))
        com, _ = generate_synthetic(_spec(slip=0.0, guess=0.0, p_master=0.0, learn_rate=1.0))
        assert com.frame["correct"].mean() > sem.frame["correct"].mean()

    def test_ordem_temporal_por_aluno(self):
        log, _ = generate_synthetic(_spec(students=2, interactions=5))
        for _, grupo in log.frame.groupby("student_id"):
            assert np.all(np.diff(grupo["timestamp"].to_numpy()) == 1)

    def test_spec_invalido(self):
        with pytest.raises(ConfigError):
            generate_synthetic(_spec(slip=0.7))
