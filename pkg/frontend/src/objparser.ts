/** Minimal OBJ parser for the mesh served at the scene's mesh URL:
 * `v x y z` vertices and triangular `f` faces (1-based, optional slash
 * suffixes). */

export interface ParsedMesh {
  vertices: Float32Array; // xyz triples
  indices: Uint32Array; // triangle corners
}

export function parseObj(text: string): ParsedMesh {
  const vertices: number[] = [];
  const indices: number[] = [];
  const lines = text.split("\n");
  for (let lineno = 1; lineno <= lines.length; lineno++) {
    const line = lines[lineno - 1].trim();
    if (line === "" || line.startsWith("#")) continue;
    const parts = line.split(/\s+/);
    if (parts[0] === "v") {
      if (parts.length !== 4) throw new Error(`line ${lineno}: bad vertex`);
      for (let k = 1; k < 4; k++) {
        const x = Number(parts[k]);
        if (!Number.isFinite(x)) throw new Error(`line ${lineno}: bad vertex`);
        vertices.push(x);
      }
    } else if (parts[0] === "f") {
      if (parts.length !== 4)
        throw new Error(`line ${lineno}: only triangular faces supported`);
      for (let k = 1; k < 4; k++) {
        const index = Number(parts[k].split("/")[0]);
        if (!Number.isInteger(index) || index < 1)
          throw new Error(`line ${lineno}: bad face index`);
        indices.push(index - 1);
      }
    }
    // other directives (vn, vt, o, usemtl, ...) are ignored
  }
  const count = vertices.length / 3;
  for (const index of indices)
    if (index >= count) throw new Error(`face index ${index + 1} out of range`);
  return {
    vertices: Float32Array.from(vertices),
    indices: Uint32Array.from(indices),
  };
}
