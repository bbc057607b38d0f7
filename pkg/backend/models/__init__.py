# Models package
from .schemas import *
from .errors import *
