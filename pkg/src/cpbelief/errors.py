"""Exception hierarchy shared by every stage of the pipeline."""


class CPBeliefError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this family."""

    exit_code = 1


class ModelError(CPBeliefError, ValueError):
    exit_code = 2


class UnknownAttribute(ModelError, KeyError):
    def __init__(self, name):
        super().__init__(f"unknown attribute: {name!r}")
        self.name = name

    def __str__(self):
        return self.args[0]


class MalformedRule(ModelError):
    pass


class DuplicateRule(ModelError):
    pass


class DanglingPair(ModelError):
    pass


class UniverseMismatch(ModelError):
    pass


class IngestError(CPBeliefError):
    exit_code = 3


class MalformedRow(IngestError):
    def __init__(self, line, reason=""):
        msg = f"malformed row at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)
        self.line = line


class UnknownItem(IngestError):
    def __init__(self, item):
        super().__init__(f"item {item!r} is rated but has no attribute row")
        self.item = item


class MeasureError(CPBeliefError):
    exit_code = 4


class EmptyDatabase(MeasureError):
    pass


class TooFewRules(MeasureError):
    pass


class EmptyRuleset(MeasureError):
    pass


class BeliefError(CPBeliefError):
    exit_code = 5


class ZeroNorm(BeliefError):
    pass


class DatabaseTooSmall(BeliefError):
    pass


class EmptySystem(BeliefError):
    pass


class UnknownBeliefFunction(BeliefError, KeyError):
    def __str__(self):
        return str(self.args[0])


class EvalError(CPBeliefError):
    exit_code = 6


class MissingSplit(EvalError):
    pass


class ArtifactError(CPBeliefError):
    exit_code = 7


class MissingArtifact(ArtifactError):
    pass


class SchemaMismatch(ArtifactError):
    pass


class ConfigError(CPBeliefError):
    exit_code = 8
