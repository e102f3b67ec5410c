/** three.js rendering: rods as colored polylines with point markers, the
 * vessel mesh semi-transparent, and a simple drag-orbit camera.  The
 * renderer only reads the latest view state on each animation frame.
 */

import * as THREE from "three";
import type { ParsedMesh } from "./objparser.js";
import type { Vec3 } from "./input.js";

const ROD_COLORS = [0x4fc3f7, 0xffb74d, 0x81c784, 0xe57373, 0xba68c8];

export class Renderer3D {
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private renderer: THREE.WebGLRenderer;
  private rodLines: THREE.Line[] = [];
  private rodPoints: THREE.Points[] = [];
  private meshObject: THREE.Mesh | null = null;
  private raycaster = new THREE.Raycaster();

  // drag-orbit state
  private orbit = { theta: 0.6, phi: 1.1, radius: 0.5, target: new THREE.Vector3() };

  constructor(private canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(
      50,
      canvas.clientWidth / Math.max(1, canvas.clientHeight),
      1e-4,
      100,
    );
    this.scene.background = new THREE.Color(0x101418);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(1, 2, 1.5);
    this.scene.add(sun);
    this.updateCamera();
    this.raycaster.params.Points = { threshold: 5e-3 };
  }

  resize(): void {
    const w = this.canvas.clientWidth;
    const h = Math.max(1, this.canvas.clientHeight);
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  setMesh(mesh: ParsedMesh): void {
    if (this.meshObject) this.scene.remove(this.meshObject);
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(mesh.vertices, 3));
    geometry.setIndex(new THREE.BufferAttribute(mesh.indices, 1));
    geometry.computeVertexNormals();
    const material = new THREE.MeshStandardMaterial({
      color: 0x8899aa,
      transparent: true,
      opacity: 0.25, // hollow-vessel viewing
      side: THREE.DoubleSide,
      depthWrite: false,
    });
    this.meshObject = new THREE.Mesh(geometry, material);
    this.scene.add(this.meshObject);
  }

  /** Rebuild or update one polyline+marker pair per rod. */
  updateRods(polylines: number[][][]): void {
    while (this.rodLines.length < polylines.length) {
      const color = ROD_COLORS[this.rodLines.length % ROD_COLORS.length];
      const line = new THREE.Line(
        new THREE.BufferGeometry(),
        new THREE.LineBasicMaterial({ color }),
      );
      const points = new THREE.Points(
        new THREE.BufferGeometry(),
        new THREE.PointsMaterial({ color, size: 4e-3 }),
      );
      points.userData.rod = this.rodLines.length;
      this.scene.add(line, points);
      this.rodLines.push(line);
      this.rodPoints.push(points);
    }
    polylines.forEach((polyline, rod) => {
      const flat = new Float32Array(polyline.length * 3);
      polyline.forEach((p, i) => flat.set(p, i * 3));
      for (const object of [this.rodLines[rod], this.rodPoints[rod]]) {
        object.geometry.setAttribute("position", new THREE.BufferAttribute(flat, 3));
        object.geometry.attributes.position.needsUpdate = true;
        object.geometry.computeBoundingSphere();
      }
    });
  }

  render(): void {
    this.renderer.render(this.scene, this.camera);
  }

  /** Pick the nearest rod point under the pointer (NDC coords). */
  pick(ndcX: number, ndcY: number): { rod: number; point: number; position: Vec3 } | null {
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const hits = this.raycaster.intersectObjects(this.rodPoints, false);
    if (hits.length === 0 || hits[0].index === undefined) return null;
    const hit = hits[0];
    const position = (hit.object as THREE.Points).geometry.attributes
      .position as THREE.BufferAttribute;
    const i = hit.index as number;
    return {
      rod: hit.object.userData.rod as number,
      point: i,
      position: [position.getX(i), position.getY(i), position.getZ(i)],
    };
  }

  /** Pointer ray in world space for grab retargeting. */
  pointerRay(ndcX: number, ndcY: number): { origin: Vec3; dir: Vec3 } {
    this.raycaster.setFromCamera(new THREE.Vector2(ndcX, ndcY), this.camera);
    const { origin, direction } = this.raycaster.ray;
    return {
      origin: [origin.x, origin.y, origin.z],
      dir: [direction.x, direction.y, direction.z],
    };
  }

  viewDirection(): Vec3 {
    const dir = new THREE.Vector3();
    this.camera.getWorldDirection(dir);
    return [dir.x, dir.y, dir.z];
  }

  orbitBy(dTheta: number, dPhi: number): void {
    this.orbit.theta += dTheta;
    this.orbit.phi = Math.min(Math.max(this.orbit.phi + dPhi, 0.05), Math.PI - 0.05);
    this.updateCamera();
  }

  zoomBy(factor: number): void {
    this.orbit.radius = Math.min(Math.max(this.orbit.radius * factor, 0.02), 5);
    this.updateCamera();
  }

  private updateCamera(): void {
    const { theta, phi, radius, target } = this.orbit;
    this.camera.position.set(
      target.x + radius * Math.sin(phi) * Math.cos(theta),
      target.y + radius * Math.cos(phi),
      target.z + radius * Math.sin(phi) * Math.sin(theta),
    );
    this.camera.lookAt(target);
  }
}
