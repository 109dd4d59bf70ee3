"""Exception hierarchy shared across the pipeline.

Exit codes follow the CLI contract: 1 for usage/config problems, 2 for data
problems, 3 for backend problems.
"""


class SevTrainError(Exception):
    exit_code = 2


class ConfigError(SevTrainError):
    exit_code = 1


class DataError(SevTrainError):
    exit_code = 2


class TrainingError(SevTrainError):
    exit_code = 2


class BackendError(SevTrainError):
    exit_code = 3
