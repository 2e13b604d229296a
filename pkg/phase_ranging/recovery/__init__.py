from .abstract import AbstractRecovery
from .anm import *
from .nn import *

Recoveries = AbstractRecovery.create_recovery_config_model()
