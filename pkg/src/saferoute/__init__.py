"""Safety-aware pedestrian routing on street graphs with a policy-gradient agent."""

from .crime_index import CrimeIndex, CrimeRecord, crimes_within_radius, edge_crime_stats, kde_density, load_crimes
from .embeddings import EmbeddingTable, SkipGramConfig, WalkConfig, generate_walks, state_vector, train_skipgram
from .geo import CompassAction, GeoPoint, bearing_degrees, compass_sector, haversine_miles
from .policy import AdamState, PolicyNetwork, adam_step, forward, grad_log_policy, mask_and_renormalize, sample_action
from .rewards import RewardConfig, global_avg, local_avg, path_length, r_crime, suffix_rewards
from .routing import RouteResult, beam_search, remove_loops
from .street_graph import RoutePath, StreetEdge, StreetGraph, dijkstra, load_map, sample_k_hop_pairs
from .training import TrainConfig, retrain_with_rewards, rollout, supervised_train

__version__ = "0.1.0"
