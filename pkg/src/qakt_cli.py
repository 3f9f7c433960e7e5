#!/usr/bin/env python3
"""
Linha de comando do QAKT
========================
Treino em duas fases, avaliação, validação cruzada, dados sintéticos,
comparação de q-matrices, gradcheck e coleta de dados.

Códigos de saída: 0 sucesso, 1 uso/configuração, 2 dados, 3 falha numérica.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

from avaliacao_qmatrix import align_to_vocabulary, match_and_score
from binarizacao import BinarizationConfig, binarize
from checkpoint import load_checkpoint, save_checkpoint
from configuracao import (BINARIZE_AXES, BINARIZE_RULES, PRECISIONS, RESPONSE_LN_MODES,
                          RETRIEVER_VALUE_MODES, config_hash, header_comment, load_config,
                          load_synthetic_spec, parse_int_list, save_config)
from dados import (DATA_DIR, fetch_dataset, ingest, kfold, read_qmatrix, reindex, slice_sequences,
                   write_interactions, write_qmatrix)
from excecoes import ConfigError, DataError, NumericError, QAKTError
from gradcheck import AMOSTRA_MINIMA, check_full_model
from sintetico import generate_synthetic
from Tensor import set_debug
from treino import (evaluate, report_frame, report_text, run_experiment, run_fold,
                    write_history)

logger = logging.getLogger("qakt")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """Erros de uso saem com código 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: erro: {message}\n")


def exibir_cabecalho(titulo: str) -> None:
    print("═" * 60)
    print(f"  {titulo}")
    print("═" * 60)


def _secao(titulo: str) -> None:
    print("\n" + "─" * 60)
    print(f"  {titulo}")
    print("─" * 60)


# Flags de configuração compartilhadas: nome da flag -> campo do RunConfig
_FLAGS_CONFIG = {
    "skills": "n_skills", "dim": "dim", "heads": "heads", "blocks": "n_blocks",
    "slice_length": "slice_length", "batch_size": "batch_size", "epochs": "max_epochs",
    "lr": "lr", "patience": "patience", "beta": "beta", "beta_phase2": "beta_phase2",
    "lam": "lam", "eta": "eta", "binarize_rule": "binarize_rule", "binarize_axis": "binarize_axis",
    "embedding_dropout": "embedding_dropout", "prediction_dropout": "prediction_dropout",
    "response_layer_norm": "response_layer_norm", "retriever_value": "retriever_value",
    "folds": "folds", "seed": "seed", "precision": "precision", "jobs": "jobs",
    "data": "data", "name": "name", "output_root": "output_root",
}


def _adicionar_flags_config(p: argparse.ArgumentParser, com_skills: bool = True) -> None:
    p.add_argument("--config", help="Arquivo YAML com o RunConfig")
    p.add_argument("--data", help="CSV de interações")
    if com_skills:
        p.add_argument("--skills", type=int, help="Número de habilidades N")
    p.add_argument("--dim", type=int, help="Dimensão de embedding D")
    p.add_argument("--heads", type=int)
    p.add_argument("--blocks", type=int, help="Blocos de atenção por estágio")
    p.add_argument("--slice-length", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int, help="Máximo de épocas por fase")
    p.add_argument("--lr", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--beta", type=float, help="Peso da perda esparsa na fase 1")
    p.add_argument("--beta-phase2", type=float)
    p.add_argument("--lam", type=float, help="Peso da regularização das dificuldades")
    p.add_argument("--eta", type=float, help="Fator do limiar de binarização")
    p.add_argument("--binarize-rule", choices=BINARIZE_RULES)
    p.add_argument("--binarize-axis", choices=BINARIZE_AXES)
    p.add_argument("--no-guarantee", action="store_true", help="Não garante ao menos uma habilidade por questão")
    p.add_argument("--embedding-dropout", type=float)
    p.add_argument("--prediction-dropout", type=float)
    p.add_argument("--no-act", action="store_true")
    p.add_argument("--no-avg", action="store_true")
    p.add_argument("--no-ln", action="store_true")
    p.add_argument("--mu-active-half", action="store_true", help="Soma μ só na metade ativa da resposta")
    p.add_argument("--response-layer-norm", choices=RESPONSE_LN_MODES)
    p.add_argument("--distance-gradient", action="store_true")
    p.add_argument("--retriever-value", choices=RETRIEVER_VALUE_MODES)
    p.add_argument("--no-early-stopping", action="store_true")
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=PRECISIONS)
    p.add_argument("--jobs", type=int, help="Processos para folds em paralelo")
    p.add_argument("--name", help="Nome da execução (subdiretório da saída)")
    p.add_argument("--output-root", help="Raiz das saídas (padrão: $QAKT_OUTPUT_ROOT ou run)")


def _overrides(args) -> Dict[str, object]:
    valores = {campo: getattr(args, flag, None) for flag, campo in _FLAGS_CONFIG.items()}
    # Flags booleanas só sobrescrevem quando presentes
    booleanas = {
        "no_act": ("no_act", True), "no_avg": ("no_avg", True), "no_ln": ("no_ln", True),
        "distance_gradient": ("distance_gradient", True),
        "no_guarantee": ("guarantee_min_one_skill", False),
        "mu_active_half": ("mu_both_halves", False),
        "no_early_stopping": ("early_stopping", False),
    }
    for flag, (campo, valor) in booleanas.items():
        if getattr(args, flag, False):
            valores[campo] = valor
    return valores


def _carregar_config(args):
    cfg = load_config(args.config, _overrides(args))
    if not cfg.data:
        raise ConfigError("Informe o CSV de interações (--data ou `data` no config)")
    return cfg


def _diretorio_saida(cfg) -> str:
    saida = os.path.join(cfg.output_root, cfg.name)
    os.makedirs(saida, exist_ok=True)
    return saida


def _escrever_texto(path: str, texto: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(texto)


# Comandos

def cmd_train(args) -> int:
    """Fase 1 -> binarização -> fase 2 no primeiro experimento dos folds."""
    cfg = _carregar_config(args)
    fases = {"1": (1,), "2": (2,), "both": (1, 2)}[args.phase]
    exibir_cabecalho(f"QAKT · treino ({cfg.name})")

    log = ingest(cfg.data)
    qmatrix = None
    if args.qmatrix or cfg.qmatrix:
        qmatrix = align_to_vocabulary(read_qmatrix(args.qmatrix or cfg.qmatrix), log.question_ids)
        if qmatrix.getSkillCount() != cfg.n_skills:
            cfg = cfg.with_overrides(n_skills=qmatrix.getSkillCount())
            logger.info("n_skills ajustado para %d pela q-matrix", cfg.n_skills)
    if fases == (2,) and qmatrix is None:
        raise ConfigError("--phase 2 exige --qmatrix")

    fatias = slice_sequences(log, cfg.slice_length)
    split = kfold(log, cfg.folds, cfg.seed)[0]
    print(f"📊 {len(log)} interações, {len(log.students())} alunos, {log.n_questions} questões")
    print(f"⚙️  N={cfg.n_skills} D={cfg.dim} fases={'+'.join(map(str, fases))}")

    resultado = run_fold(cfg, fatias, split, log.n_questions, log.question_ids,
                         qmatrix=qmatrix, phases=fases, keep_model=True)

    saida = _diretorio_saida(cfg)
    cabecalho = header_comment(cfg)
    save_checkpoint(os.path.join(saida, "checkpoint"), resultado.model, cfg, log.question_ids,
                    optimizer=resultado.optimizer, rng=resultado.rng)
    Q = resultado.qmatrix
    if Q is None:
        Q = binarize(resultado.model.relevance(), BinarizationConfig.from_run_config(cfg), log.question_ids)
    write_qmatrix(Q, os.path.join(saida, "qmatrix.csv"), cabecalho)
    write_history(resultado.history, os.path.join(saida, "history.csv"), cabecalho)
    save_config(cfg, os.path.join(saida, "config.yaml"))
    _escrever_texto(os.path.join(saida, "report.txt"),
                    f"{cabecalho}\n"
                    f"fold: {resultado.fold}\n"
                    f"test_auc: {resultado.test_auc:.6f}\n"
                    f"baseline_auc: {resultado.baseline_auc:.6f}\n"
                    f"best_epochs: {' '.join(map(str, resultado.best_epochs))}\n"
                    f"qmatrix_density: {Q.getDensity():.6f}\n")

    _secao("MODELO")
    print(resultado.model.resumo(f"QAKT N={cfg.n_skills} D={cfg.dim}"))

    _secao("RESULTADO")
    print(f"✅ AUC de teste: {resultado.test_auc:.4f}  (baseline de frequência {resultado.baseline_auc:.4f})")
    print(f"📁 Saídas em: {saida}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    """Carrega um checkpoint e calcula a AUC nas interações dadas."""
    exibir_cabecalho("QAKT · avaliação")
    ckpt = load_checkpoint(args.checkpoint)
    log = ingest(args.data)
    if ckpt.question_ids:
        log = reindex(log, ckpt.question_ids)
    fatias = slice_sequences(log, ckpt.config.slice_length)
    resultado = evaluate(ckpt.model, fatias, ckpt.config.batch_size, strict=True)

    texto = (f"{header_comment(ckpt.config)}\n"
             f"checkpoint: {args.checkpoint}\n"
             f"data: {args.data}\n"
             f"predictions: {resultado.labels.size}\n"
             f"auc: {resultado.auc:.6f}\n")
    if args.output:
        _escrever_texto(args.output, texto)
    print(f"✅ AUC: {resultado.auc:.4f} ({resultado.labels.size} predições)")
    return EXIT_OK


def cmd_crossval(args) -> int:
    """Validação cruzada em k folds (padrão, ablações ou varredura de N)."""
    cfg = _carregar_config(args)
    skills = parse_int_list(args.skills_list)
    if skills and len(skills) == 1:
        # um único N não é varredura
        cfg = cfg.with_overrides(n_skills=skills[0])
        skills = None
    if args.ablations and skills:
        raise ConfigError("Use --ablations ou uma lista em --skills, não ambos")
    modo = "ablations" if args.ablations else ("sweep" if skills else "standard")
    exibir_cabecalho(f"QAKT · validação cruzada ({modo}, {cfg.folds} folds)")

    log = ingest(cfg.data)
    qmatrix = None
    if args.qmatrix or cfg.qmatrix:
        qmatrix = align_to_vocabulary(read_qmatrix(args.qmatrix or cfg.qmatrix), log.question_ids)
        if qmatrix.getSkillCount() != cfg.n_skills:
            cfg = cfg.with_overrides(n_skills=qmatrix.getSkillCount())

    blocos = run_experiment(log, cfg, mode=modo, skills=skills, qmatrix=qmatrix)

    saida = _diretorio_saida(cfg)
    cabecalho = header_comment(cfg)
    historico = [linha for bloco in blocos for fold in bloco.folds for linha in fold.history]
    write_history(historico, os.path.join(saida, "history.csv"), cabecalho)
    texto = report_text(blocos, cabecalho)
    _escrever_texto(os.path.join(saida, "report.txt"), texto)
    with open(os.path.join(saida, "report.csv"), "w", encoding="utf-8", newline="") as f:
        f.write(cabecalho + "\n")
        report_frame(blocos).to_csv(f, index=False, float_format="%.10g")
    for bloco in blocos:
        if bloco.folds and bloco.folds[0].qmatrix is not None:
            write_qmatrix(bloco.folds[0].qmatrix,
                          os.path.join(saida, f"qmatrix_{bloco.variant}.csv"), cabecalho)

    _secao("RESULTADO")
    print(texto, end="")
    print(f"📁 Saídas em: {saida}")
    return EXIT_OK


def cmd_synth(args) -> int:
    """Gera interações DINA e a q-matrix verdadeira."""
    overrides = {
        "n_skills": args.skills, "n_questions": args.questions, "students": args.students,
        "interactions": args.interactions, "slip": args.slip, "guess": args.guess,
        "p_master": args.p_master, "q_density": args.density, "learn_rate": args.learn_rate,
        "seed": args.seed,
    }
    spec = load_synthetic_spec(args.spec, overrides)
    exibir_cabecalho("QAKT · dados sintéticos (DINA)")
    log, Q = generate_synthetic(spec)

    os.makedirs(args.output, exist_ok=True)
    cabecalho = f"# qakt synth config_hash={config_hash(spec)} seed={spec.seed}"
    write_interactions(log, os.path.join(args.output, "interactions.csv"), cabecalho)
    write_qmatrix(Q, os.path.join(args.output, "qmatrix_true.csv"), cabecalho)
    print(f"✅ {len(log)} interações, {spec.n_skills} habilidades, {spec.n_questions} questões")
    print(f"📁 Saídas em: {args.output}")
    return EXIT_OK


def cmd_score_qmatrix(args) -> int:
    """Compara uma q-matrix aprendida com a verdadeira."""
    aprendida = read_qmatrix(args.learned)
    verdadeira = read_qmatrix(args.true)
    relatorio = match_and_score(aprendida, verdadeira, seed=args.seed)
    cabecalho = f"# qakt score-qmatrix seed={args.seed}"
    texto = relatorio.texto(cabecalho)
    if args.output:
        os.makedirs(args.output, exist_ok=True)
        _escrever_texto(os.path.join(args.output, "report.txt"), texto)
        with open(os.path.join(args.output, "report.csv"), "w", encoding="utf-8", newline="") as f:
            f.write(cabecalho + "\n")
            relatorio.as_frame().to_csv(f, index=False, float_format="%.10g")
    print(texto, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    """Gradcheck da perda completa; sai com 3 se algum erro passar da tolerância."""
    exibir_cabecalho("QAKT · gradcheck")
    relatorio = check_full_model(seed=args.seed, step=args.step, tolerance=args.tolerance,
                                 amostra=args.sample)
    texto = relatorio.texto()
    if args.output:
        _escrever_texto(args.output, f"# qakt gradcheck seed={args.seed}\n{texto}\n")
    print(texto)
    return EXIT_OK if relatorio.ok else EXIT_NUMERIC


def cmd_fetch(args) -> int:
    """Baixa um CSV de interações para dados_coletados/."""
    caminho = fetch_dataset(args.url, args.name, destino=args.dest or DATA_DIR)
    print(f"✅ Dados salvos em: {caminho}")
    return EXIT_OK


def construir_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qakt", description="QAKT: q-matrix aprendida com atenção monotônica")
    parser.add_argument("-v", "--verbose", action="store_true", help="Logs de depuração")
    parser.add_argument("-q", "--quiet", action="store_true", help="Só avisos e erros")
    parser.add_argument("--debug", action="store_true", help="Verifica NaN/Inf em cada operação")
    sub = parser.add_subparsers(dest="comando", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="Treino em duas fases")
    _adicionar_flags_config(p)
    p.add_argument("--phase", choices=["1", "2", "both"], default="both")
    p.add_argument("--qmatrix", help="Q-matrix fixa (pula a fase 1)")
    p.set_defaults(funcao=cmd_train)

    p = sub.add_parser("evaluate", help="AUC de um checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", help="Arquivo do relatório")
    p.set_defaults(funcao=cmd_evaluate)

    p = sub.add_parser("crossval", help="Validação cruzada em k folds")
    _adicionar_flags_config(p, com_skills=False)
    p.add_argument("--skills", "--skills-list", dest="skills_list",
                   help="N, ou uma lista para a varredura, ex.: 5,10,20")
    p.add_argument("--ablations", action="store_true", help="QAKT, NoAct, NoAvg e NoLN")
    p.add_argument("--qmatrix", help="Q-matrix injetada (pula a fase 1)")
    p.set_defaults(funcao=cmd_crossval)

    p = sub.add_parser("synth", help="Gera dados sintéticos DINA")
    p.add_argument("--spec", help="Arquivo YAML com o SyntheticSpec")
    p.add_argument("--output", required=True, help="Diretório de saída")
    p.add_argument("--skills", type=int)
    p.add_argument("--questions", type=int)
    p.add_argument("--students", type=int)
    p.add_argument("--interactions", type=int)
    p.add_argument("--slip", type=float)
    p.add_argument("--guess", type=float)
    p.add_argument("--p-master", type=float)
    p.add_argument("--density", type=float)
    p.add_argument("--learn-rate", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(funcao=cmd_synth)

    p = sub.add_parser("score-qmatrix", help="Compara q-matrix aprendida e verdadeira")
    p.add_argument("--learned", required=True)
    p.add_argument("--true", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="Diretório do relatório")
    p.set_defaults(funcao=cmd_score_qmatrix)

    p = sub.add_parser("gradcheck", help="Verifica os gradientes da perda completa")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--sample", type=int, default=AMOSTRA_MINIMA, help="Coordenadas por tensor (mínimo 100)")
    p.add_argument("--output", help="Arquivo do relatório")
    p.set_defaults(funcao=cmd_gradcheck)

    p = sub.add_parser("fetch", help="Baixa um conjunto de dados público")
    p.add_argument("--url", required=True)
    p.add_argument("--name", required=True, help="Nome do arquivo local")
    p.add_argument("--dest", help="Diretório (padrão dados_coletados/)")
    p.set_defaults(funcao=cmd_fetch)
    return parser


def configurar_logging(verbose: bool, quiet: bool) -> None:
    nivel = logging.DEBUG if verbose else (logging.WARNING if quiet else logging.INFO)
    logging.basicConfig(level=nivel, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    """Função principal do programa; devolve o código de saída."""
    parser = construir_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configurar_logging(args.verbose, args.quiet)
    if args.debug or os.environ.get("QAKT_DEBUG") == "1":
        set_debug(True)

    try:
        return args.funcao(args)
    except KeyboardInterrupt:
        print("\n\n👋 Programa interrompido!")
        return EXIT_CONFIG
    except ConfigError as e:
        print(f"❌ Erro de configuração: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"❌ Erro nos dados: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"❌ Falha numérica: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except QAKTError as e:
        print(f"❌ Erro: {e}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        set_debug(False)


if __name__ == "__main__":
    sys.exit(main())
