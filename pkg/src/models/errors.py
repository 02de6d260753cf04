class NLSBirkhoffError(Exception):
    """Erro base do toolkit"""


class ValidationError(NLSBirkhoffError, ValueError):
    """Entrada inválida (parâmetros, configuração, coeficientes)"""


class ConfigError(ValidationError):
    """Arquivo de configuração com chaves desconhecidas ou caminhos inválidos"""


class InfeasiblePlanError(ValidationError):
    """epsilon grande demais para obter r >= 2"""


class BudgetExceededError(NLSBirkhoffError):
    """Número de coeficientes acima do limite configurado"""

    def __init__(self, count: int, cap: int):
        super().__init__(f"Limite de coeficientes excedido: {count} > {cap}")
        self.count = count
        self.cap = cap


class FlowEscapeError(NLSBirkhoffError):
    """A norma l1 saiu da bola onde o fluxo é garantido"""


class BlowUpError(NLSBirkhoffError):
    """NaN/Inf detectado durante a simulação"""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial
