from .abstract import AbstractWriter
from .cdf import *
from .runs import *
from .summary import *

Writers = AbstractWriter.create_writer_config_model()
