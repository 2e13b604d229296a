from .capture_io import *
from .channel import *
from .constants import *
from .exceptions import *
from .exporter import *
from .harness import *
from .linalg import *
from .models import *
from .music import *
from .reconstruct import *
from .recovery import *
from .scheduler import *
from .settings import *
from .utils import *
from .version import __version__, __version_tuple__
