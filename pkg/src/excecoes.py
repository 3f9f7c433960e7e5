"""
Exceções do motor QAKT.

Cada categoria corresponde a um código de saída da linha de comando
(ver qakt_cli.py): configuração -> 1, dados -> 2, numérico -> 3.
"""


class QAKTError(Exception):
    """Base de todas as exceções do projeto."""


class ShapeError(QAKTError, ValueError):
    """Formas de tensores incompatíveis."""


class MaskError(QAKTError, ValueError):
    """Máscara de atenção sem nenhuma posição admissível em alguma linha."""


class ConfigError(QAKTError, ValueError):
    """Configuração inválida (hiperparâmetros, chaves desconhecidas, dimensões)."""


class DataError(QAKTError, ValueError):
    """Dados de entrada inválidos ou vazios."""


class FormatError(DataError):
    """Arquivo com formato inesperado (coluna ausente, valor não binário...)."""


class UndefinedMetricError(DataError):
    """Métrica indefinida para a entrada (ex.: AUC com uma só classe)."""


class NumericError(QAKTError, ArithmeticError):
    """NaN/Inf detectado durante o cálculo ou o treino."""
