"""refinery: turn raw multi-language source trees into clean, deduplicated,
quality-scored, resampled pretraining data and ChatML-formatted SFT data."""

from .dedup import (DedupDecision, dedup_pass, dedup_segments, exact_key,
                    segment_split, shingle_features, simhash, simhash_score)
from .extract import (CodeCommentPair, FunctionUnit, effective_code_ratio,
                      extract_pairs, filter_pairs, is_meaningless_comment,
                      parse_functions)
from .filters import FilterRuleSet, FilterVerdict, apply_file_filters, scrub_secrets
from .ingest import (IngestConfig, compute_text_stats, normalize_newlines,
                     scan_corpus, with_content)
from .langinfo import detect_language
from .pipeline import (CorpusManifest, PipelineConfig, run_pipeline, validate_config)
from .portrait import PortraitReport, build_portrait, classify_module
from .quality import (MetricCounts, QualityScore, collect_metric_counts,
                      compute_quality_score, coupling_degree,
                      cyclomatic_complexity, quality_gate, score_correctness,
                      score_identifiers, score_literals, score_redundancy,
                      size_score)
from .records import DropReason, FileRecord, Fingerprint, TextStats
from .resample import (LanguageDistribution, ResamplePolicy, compute_distribution,
                       resample)
from .sftformat import (ChatMLError, ChatSample, Turn, desanitize,
                        from_json_record, loss_mask, make_sample, parse_chatml,
                        render_chatml, sanitize)
from .tokenstats import (BpeVocab, CompressionReport, compression_rate,
                         corpus_compression_report, decode, encode, train_bpe)

__version__ = "0.1.0"
