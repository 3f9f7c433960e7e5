"""
Checkpoints do modelo.

Layout (versão 1) de um diretório de checkpoint:

    params.npz   "param::<nome>" para cada tensor do modelo,
                 "qmatrix" com a q-matrix fixa (se houver),
                 "adam::<chave>" com o estado do otimizador (se houver)
    meta.json    {"format_version": 1, "config": {...}, "n_questions": M,
                  "n_skills": N, "qmatrix_frozen": bool, "question_ids": [...],
                  "rng_state": {...} | null, "extra": {...}}
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

import numpy as np

from AdamOptimizer import AdamOptimizer
from configuracao import RunConfig, config_hash
from excecoes import DataError, FormatError
from QAKTModel import QAKTModel

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAMS_FILE = "params.npz"
META_FILE = "meta.json"


@dataclass
class Checkpoint:
    model: QAKTModel
    config: RunConfig
    question_ids: List[str] = field(default_factory=list)
    optimizer_state: Dict[str, np.ndarray] = field(default_factory=dict)
    rng_state: Optional[Dict[str, Any]] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def rng(self) -> Optional[np.random.Generator]:
        """Gerador restaurado no estado salvo."""
        if self.rng_state is None:
            return None
        gerador = np.random.default_rng()
        gerador.bit_generator.state = self.rng_state
        return gerador


def save_checkpoint(path: str, model: QAKTModel, cfg: RunConfig,
                    question_ids: Optional[List[str]] = None,
                    optimizer: Optional[AdamOptimizer] = None,
                    rng: Optional[np.random.Generator] = None,
                    extra: Optional[Dict[str, Any]] = None) -> None:
    """Grava params.npz e meta.json em `path` (criado se necessário)."""
    os.makedirs(path, exist_ok=True)
    arrays = {f"param::{nome}": t.values for nome, t in model.parameters().items()}
    if model.qmatrix_frozen:
        arrays["qmatrix"] = model.embedding.fixed_qmatrix
    if optimizer is not None:
        arrays.update({f"adam::{k}": v for k, v in optimizer.state_dict().items()})
    np.savez(os.path.join(path, PARAMS_FILE), **arrays)

    meta = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
        "n_questions": model.n_questions,
        "n_skills": model.n_skills,
        "qmatrix_frozen": model.qmatrix_frozen,
        "question_ids": list(question_ids or []),
        "rng_state": None if rng is None else rng.bit_generator.state,
        "extra": extra or {},
    }
    with open(os.path.join(path, META_FILE), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, ensure_ascii=False, default=str)
    logger.info("Checkpoint salvo em %s", path)


def load_checkpoint(path: str) -> Checkpoint:
    """
    Reconstrói o modelo salvo por `save_checkpoint`.

    Raises:
        DataError: Checkpoint inexistente
        FormatError: Versão desconhecida ou parâmetros incompatíveis
    """
    arquivo_meta = os.path.join(path, META_FILE)
    arquivo_params = os.path.join(path, PARAMS_FILE)
    if not (os.path.exists(arquivo_meta) and os.path.exists(arquivo_params)):
        raise DataError(f"Checkpoint não encontrado em {path}")
    with open(arquivo_meta, "r", encoding="utf-8") as f:
        meta = json.load(f)
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"Versão de checkpoint não suportada: {meta.get('format_version')}")

    conhecidos = {f.name for f in fields(RunConfig)}
    cfg = RunConfig(**{k: v for k, v in meta["config"].items() if k in conhecidos}).validate()
    model = QAKTModel.from_config(cfg, n_questions=meta["n_questions"], n_skills=meta["n_skills"])

    with np.load(arquivo_params) as dados:
        arrays = {k: dados[k] for k in dados.files}
    if meta.get("qmatrix_frozen"):
        model.inject(arrays["qmatrix"].astype(np.int8))

    params = model.parameters()
    for nome, t in params.items():
        chave = f"param::{nome}"
        if chave not in arrays:
            raise FormatError(f"Parâmetro ausente no checkpoint: {nome}")
        if arrays[chave].shape != t.shape:
            raise FormatError(f"Parâmetro {nome}: forma {arrays[chave].shape}, esperado {t.shape}")
        t.values = arrays[chave].astype(t.dtype)

    adam = {k[len("adam::"):]: v for k, v in arrays.items() if k.startswith("adam::")}
    logger.info("Checkpoint carregado de %s", path)
    return Checkpoint(model=model, config=cfg, question_ids=list(meta.get("question_ids", [])),
                      optimizer_state=adam, rng_state=meta.get("rng_state"),
                      extra=meta.get("extra", {}))
