import pytest

from configuracao import (RunConfig, SyntheticSpec, config_hash, header_comment, load_config,
                          load_synthetic_spec, parse_int_list, save_config)
from excecoes import ConfigError


class TestRunConfig:

    def test_padroes(self):
        cfg = load_config()
        assert (cfg.dim, cfg.heads, cfg.slice_length, cfg.batch_size, cfg.max_epochs) == (64, 8, 200, 24, 300)
        assert cfg.binarize_rule == "threshold-ge"

    def test_yaml_com_sobrescritas(self, tmp_path):
        arquivo = tmp_path / "cfg.yaml"
        arquivo.write_text("n_skills: 7\nlr: 1e-3\ndim: 16\nheads: 4\n", encoding="utf-8")
        cfg = load_config(str(arquivo), {"n_skills": 9, "dim": None})
        assert cfg.n_skills == 9
        assert cfg.dim == 16
        assert cfg.lr == pytest.approx(1e-3)

    def test_chave_desconhecida(self, tmp_path):
        arquivo = tmp_path / "cfg.yaml"
        arquivo.write_text("n_skils: 7\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="n_skils"):
            load_config(str(arquivo))

    def test_arquivo_inexistente(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nada.yaml"))

    def test_yaml_que_nao_e_mapeamento(self, tmp_path):
        arquivo = tmp_path / "cfg.yaml"
        arquivo.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(str(arquivo))

    @pytest.mark.parametrize("campo,valor", [
        ("n_skills", 0), ("dim", 63), ("heads", 3), ("folds", 2), ("lr", 0.0),
        ("eta", 0.0), ("eta", 1.5), ("slice_length", 1), ("embedding_dropout", 1.0),
        ("binarize_rule", "menor"), ("precision", "float16"), ("beta", -1.0), ("lr", "rapido"),
    ])
    def test_valores_invalidos(self, campo, valor):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(**{campo: valor})

    def test_with_overrides_ignora_none(self):
        cfg = RunConfig().with_overrides(n_skills=None, dim=32)
        assert cfg.n_skills == 10 and cfg.dim == 32

    def test_raiz_de_saida_por_ambiente(self, monkeypatch):
        monkeypatch.setenv("QAKT_OUTPUT_ROOT", "/tmp/saidas")
        assert RunConfig().output_root == "/tmp/saidas"

    def test_salvar_e_recarregar(self, tmp_path):
        cfg = RunConfig(n_skills=4, dim=16, heads=2).validate()
        caminho = str(tmp_path / "salvo.yaml")
        save_config(cfg, caminho)
        assert load_config(caminho) == cfg


class TestHash:

    def test_hash_estavel_e_curto(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())
        assert len(config_hash(RunConfig())) == 12

    def test_hash_ignora_raiz_de_saida(self):
        assert config_hash(RunConfig(output_root="a")) == config_hash(RunConfig(output_root="b"))

    def test_hash_muda_com_hiperparametro(self):
        assert config_hash(RunConfig(n_skills=5)) != config_hash(RunConfig(n_skills=6))

    def test_cabecalho(self):
        cfg = RunConfig(seed=3)
        assert header_comment(cfg) == f"# qakt config_hash={config_hash(cfg)} seed=3"


class TestSyntheticSpec:

    def test_padrao_valido(self):
        assert load_synthetic_spec().n_questions == 50

    @pytest.mark.parametrize("campo,valor", [("slip", 0.6), ("guess", -0.1), ("students", 0), ("q_density", 2.0)])
    def test_invalido(self, campo, valor):
        with pytest.raises(ConfigError):
            load_synthetic_spec(overrides={campo: valor})

    def test_sobrescrita(self):
        assert load_synthetic_spec(overrides={"seed": 7, "slip": None}).seed == 7
        assert SyntheticSpec().slip == 0.1


class TestListaDeInteiros:

    def test_lista(self):
        assert parse_int_list("5,10,20") == [5, 10, 20]

    def test_vazia(self):
        assert parse_int_list(None) is None
        assert parse_int_list("") is None

    def test_invalida(self):
        with pytest.raises(ConfigError):
            parse_int_list("5,dez")
