from ._version import *
from .errors import *
from .utils import *
from .infer import *
from .opinion import *
from .ethica import *
from .field import *
from .config import *
from .valley import *
from .agent import *
from .adapt import *
from .hook import *
from .trace import *
from .experiment import *
from .evaluate import *
