# Services package
from services.system_model import build_system, evaluate_secular, secular_function
from services.rootfinder import SpectrumSolver
from services.statistics import compare, number_variance, parity_split, unfold
from services.rmt_reference import GOESpacing, PoissonSpacing, ReferenceDistribution, WignerSurmise
from services.experiments import ExperimentRunner
