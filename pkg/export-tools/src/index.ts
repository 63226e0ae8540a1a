export { DevEncoder, listVariants, loadEncoder, VariantSpec } from './encoder';
export {
  buildManifest,
  cosine,
  ExportManifest,
  ExportOptions,
  ExportResult,
  exportEncoder,
  exportOnnx,
  ParityError,
  ParityReport,
  verifyParity,
} from './exportOnnx';
export { cropBox, decodePng, discoverImages, encodePng, loadPng, resizeBilinear, RgbImage } from './images';
export { buildImageModel, buildTextModel, IR_VERSION, OPSET_VERSION } from './onnxproto';
export {
  boxKey,
  decodePceb,
  encodePceb,
  formatCoord,
  imageKey,
  PCEB_MAGIC,
  PCEB_VERSION,
  PcebFile,
  PcebRecord,
  readPceb,
  textKey,
  writePceb,
} from './pceb';
export {
  applyTemplate,
  DEFAULT_PROMPT_TEMPLATE,
  loadVocabulary,
  PrecomputeOptions,
  precomputeEmbeddings,
  PrecomputeSummary,
  readProposals,
  Vocabulary,
} from './precompute';
