/**
 * Minimal ONNX model serializer for the two exported encoder graphs.
 *
 * The graphs are tiny (Flatten/Cast plus one MatMul), so the protobuf
 * bytes are emitted directly instead of pulling in a protobuf toolchain.
 * Field numbers follow onnx.proto; only the fields these graphs need are
 * implemented. onnxruntime parses the result like any exported model.
 */

import { DevEncoder } from './encoder';

export const IR_VERSION = 8;
export const OPSET_VERSION = 17;

// TensorProto.DataType
export const TENSOR_FLOAT = 1;
export const TENSOR_INT64 = 7;

const ATTRIBUTE_INT = 2;
const WIRE_VARINT = 0;
const WIRE_LEN = 2;

function varint(value: number | bigint): Buffer {
  let v = BigInt(value);
  if (v < 0n) throw new Error(`negative varint: ${value}`);
  const bytes: number[] = [];
  do {
    let b = Number(v & 0x7fn);
    v >>= 7n;
    if (v > 0n) b |= 0x80;
    bytes.push(b);
  } while (v > 0n);
  return Buffer.from(bytes);
}

function tag(field: number, wire: number): Buffer {
  return varint((field << 3) | wire);
}

function varintField(field: number, value: number | bigint): Buffer {
  return Buffer.concat([tag(field, WIRE_VARINT), varint(value)]);
}

function lenField(field: number, payload: Buffer): Buffer {
  return Buffer.concat([tag(field, WIRE_LEN), varint(payload.length), payload]);
}

function stringField(field: number, text: string): Buffer {
  return lenField(field, Buffer.from(text, 'utf8'));
}

function packedVarintField(field: number, values: readonly number[]): Buffer {
  return lenField(field, Buffer.concat(values.map((v) => varint(v))));
}

// AttributeProto: name=1, i=3, type=20
function intAttribute(name: string, value: number): Buffer {
  return Buffer.concat([
    stringField(1, name),
    varintField(3, value),
    varintField(20, ATTRIBUTE_INT),
  ]);
}

// NodeProto: input=1, output=2, name=3, op_type=4, attribute=5
function node(
  opType: string,
  inputs: readonly string[],
  outputs: readonly string[],
  name: string,
  attributes: readonly Buffer[] = [],
): Buffer {
  return Buffer.concat([
    ...inputs.map((i) => stringField(1, i)),
    ...outputs.map((o) => stringField(2, o)),
    stringField(3, name),
    stringField(4, opType),
    ...attributes.map((a) => lenField(5, a)),
  ]);
}

// TensorShapeProto: dim=1; Dimension: dim_value=1
function tensorShape(dims: readonly number[]): Buffer {
  return Buffer.concat(dims.map((d) => lenField(1, varintField(1, d))));
}

// ValueInfoProto: name=1, type=2; TypeProto: tensor_type=1;
// TypeProto.Tensor: elem_type=1, shape=2
function valueInfo(name: string, elemType: number, dims: readonly number[]): Buffer {
  const tensorType = Buffer.concat([
    varintField(1, elemType),
    lenField(2, tensorShape(dims)),
  ]);
  return Buffer.concat([stringField(1, name), lenField(2, lenField(1, tensorType))]);
}

// TensorProto: dims=1, data_type=2, name=8, raw_data=9
function floatTensor(name: string, dims: readonly number[], values: Float32Array): Buffer {
  const expected = dims.reduce((a, b) => a * b, 1);
  if (values.length !== expected) {
    throw new Error(`tensor '${name}': ${values.length} values for shape [${dims.join(', ')}]`);
  }
  const raw = Buffer.alloc(4 * values.length);
  for (let i = 0; i < values.length; i++) raw.writeFloatLE(values[i], 4 * i);
  return Buffer.concat([
    packedVarintField(1, dims),
    varintField(2, TENSOR_FLOAT),
    stringField(8, name),
    lenField(9, raw),
  ]);
}

// GraphProto: node=1, name=2, initializer=5, input=11, output=12
function graph(
  name: string,
  nodes: readonly Buffer[],
  initializers: readonly Buffer[],
  inputs: readonly Buffer[],
  outputs: readonly Buffer[],
): Buffer {
  return Buffer.concat([
    ...nodes.map((n) => lenField(1, n)),
    stringField(2, name),
    ...initializers.map((t) => lenField(5, t)),
    ...inputs.map((i) => lenField(11, i)),
    ...outputs.map((o) => lenField(12, o)),
  ]);
}

// ModelProto: ir_version=1, producer_name=2, producer_version=3,
// graph=7, opset_import=8; OperatorSetIdProto: domain=1, version=2
function model(graphBuffer: Buffer): Buffer {
  const opset = Buffer.concat([stringField(1, ''), varintField(2, OPSET_VERSION)]);
  return Buffer.concat([
    varintField(1, IR_VERSION),
    stringField(2, 'export-tools'),
    stringField(3, '0.1.0'),
    lenField(7, graphBuffer),
    lenField(8, opset),
  ]);
}

/** pixels [1,3,S,S] float32 -> Flatten -> MatMul -> embedding [1,D]. */
export function buildImageModel(encoder: DevEncoder): Buffer {
  const { imageSize, dim } = encoder.spec;
  const rows = 3 * imageSize * imageSize;
  return model(
    graph(
      'image_encoder',
      [
        node('Flatten', ['pixels'], ['pixels_flat'], 'flatten', [intAttribute('axis', 1)]),
        node('MatMul', ['pixels_flat', 'image_weights'], ['embedding'], 'project'),
      ],
      [floatTensor('image_weights', [rows, dim], encoder.imageWeights)],
      [valueInfo('pixels', TENSOR_FLOAT, [1, 3, imageSize, imageSize])],
      [valueInfo('embedding', TENSOR_FLOAT, [1, dim])],
    ),
  );
}

/** tokens [1,L] int64 -> Cast(float) -> MatMul -> embedding [1,D]. */
export function buildTextModel(encoder: DevEncoder): Buffer {
  const { contextLength, dim } = encoder.spec;
  return model(
    graph(
      'text_encoder',
      [
        node('Cast', ['tokens'], ['tokens_float'], 'cast', [intAttribute('to', TENSOR_FLOAT)]),
        node('MatMul', ['tokens_float', 'text_weights'], ['embedding'], 'project'),
      ],
      [floatTensor('text_weights', [contextLength, dim], encoder.textWeights)],
      [valueInfo('tokens', TENSOR_INT64, [1, contextLength])],
      [valueInfo('embedding', TENSOR_FLOAT, [1, dim])],
    ),
  );
}
